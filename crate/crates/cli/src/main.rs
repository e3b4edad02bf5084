use clap::Parser;
use gjn_cli::args::Cli;
use gjn_cli::execute;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
        eprintln!("error: worker pool: {e}");
        std::process::exit(1);
    }
    match execute(&cli) {
        Ok(out) => {
            for line in &out.lines {
                println!("{line}");
            }
            println!("{}", out.dir.display());
            std::process::exit(out.exit_code());
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
