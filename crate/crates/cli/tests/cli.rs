use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use clap::Parser;
use gjn_cli::args::{Cli, SweepArgs};
use gjn_cli::commands::{analyze, product_form, routing, simulate, statements, sweep, verify_bar};
use gjn_cli::error::CliError;
use gjn_cli::output::Table;
use gjn_cli::{load_spec, Global};

fn gjn(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gjn"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_dir(stdout: &[u8]) -> PathBuf {
    let text = String::from_utf8_lossy(stdout);
    PathBuf::from(text.lines().last().expect("run directory line"))
}

fn golden(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn global(source: &str) -> Global {
    Global {
        spec: Arc::new(load_spec(source).unwrap()),
        source: source.into(),
        seed: 7,
        jobs: 1,
    }
}

fn sweep_args(extra: &[&str]) -> SweepArgs {
    let mut argv = vec!["gjn", "sweep"];
    argv.extend_from_slice(extra);
    match Cli::parse_from(argv).command {
        gjn_cli::args::Command::Sweep(a) => a,
        _ => unreachable!(),
    }
}

#[test]
fn csv_headers_match_golden_files() {
    let tables = [
        ("analyze.csv", Table::new(analyze::SCHEMA, analyze::COLUMNS)),
        ("simulate.csv", Table::new(simulate::SCHEMA, simulate::COLUMNS)),
        ("verify-bar.csv", Table::new(verify_bar::SCHEMA, verify_bar::COLUMNS)),
        ("statements.csv", Table::new(statements::SCHEMA, statements::COLUMNS)),
        ("sweep.csv", Table::new(sweep::SCHEMA, sweep::COLUMNS)),
        ("sweep-summary.csv", Table::new(sweep::SUMMARY_SCHEMA, sweep::SUMMARY_COLUMNS)),
        ("product-form.csv", Table::new(product_form::SCHEMA, product_form::COLUMNS)),
        ("routing-oracle.csv", Table::new(routing::SCHEMA, routing::COLUMNS)),
    ];
    for (file, t) in tables {
        assert_eq!(t.header(), golden(file), "{file}");
        assert!(t.schema.ends_with("/1"), "{file}");
    }
}

#[test]
fn written_tables_start_with_the_golden_header() {
    let root = tempfile::tempdir().unwrap();
    let cases: [(&[&str], &str); 3] = [
        (&["--spec", "corpus:tandem", "analyze", "--exact"], "analyze.csv"),
        (&["--spec", "corpus:tandem", "routing-oracle", "--paths", "2000"], "routing-oracle.csv"),
        (&["--spec", "corpus:mm1", "simulate", "--r", "0.5", "--horizon", "2000"], "simulate.csv"),
    ];
    for (args, file) in cases {
        let out = gjn(root.path(), args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let dir = run_dir(&out.stdout);
        let csv = fs::read_to_string(dir.join("results.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), golden(file).trim_end(), "{file}");
        for f in ["manifest.json", "report.json"] {
            assert!(dir.join(f).is_file(), "{file}: {f}");
        }
    }
}

#[test]
fn layout_is_hash_subcommand_timestamp() {
    let root = tempfile::tempdir().unwrap();
    let out = gjn(root.path(), &["--spec", "corpus:tandem", "analyze"]);
    let dir = run_dir(&out.stdout);
    let rel = dir.strip_prefix(root.path()).unwrap();
    let parts: Vec<String> = rel.iter().map(|p| p.to_string_lossy().into_owned()).collect();
    assert_eq!(parts.len(), 3);
    assert_eq!(parts[0], load_spec("corpus:tandem").unwrap().hash());
    assert_eq!(parts[1], "analyze");
    assert!(parts[2].ends_with('Z'), "{}", parts[2]);
}

#[test]
fn analyze_tandem_is_exact() {
    let root = tempfile::tempdir().unwrap();
    let out = gjn(root.path(), &["--spec", "corpus:tandem", "analyze", "--exact", "--r", "0.5"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&fs::read(run_dir(&out.stdout).join("report.json")).unwrap()).unwrap();
    let s = &report["scales"][0];
    assert_eq!(s["lambda"], serde_json::json!(["1", "1"]));
    assert_eq!(s["w"], serde_json::json!([["0", "1"], ["0", "0"]]));
    assert_eq!(s["u"][1], serde_json::json!(["1", "1"]));
    assert_eq!(s["r0"], serde_json::json!({"raw": "1", "clamped": "1"}));
    assert_eq!(s["mu"], serde_json::json!(["3/2", "5/4"]));
}

#[test]
fn sweep_replay_reproduces_every_csv_byte() {
    let root = tempfile::tempdir().unwrap();
    let first = gjn(
        &root.path().join("a"),
        &["--spec", "corpus:tandem", "--seed", "11", "sweep", "--r", "0.3,0.2", "--H0", "3000", "--reps", "2"],
    );
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let a = run_dir(&first.stdout);
    let second = gjn(
        &root.path().join("b"),
        &["--jobs", "2", "sweep", "--replay", a.join("manifest.json").to_str().unwrap()],
    );
    assert!(second.status.success(), "{}", String::from_utf8_lossy(&second.stderr));
    let b = run_dir(&second.stdout);
    for f in ["results.csv", "summary.csv", "points/000.csv", "points/001.csv", "plot.gp"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["points"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["code_version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn sweep_grid_validation() {
    let g = global("corpus:tandem");
    let mut empty = sweep_args(&[]);
    empty.r.clear();
    assert!(matches!(sweep::plan(&g, &empty), Err(CliError::Validation(m)) if m.contains("empty")));
    for bad in ["0.3,1", "0.3,0.3", "0,0.2"] {
        assert!(matches!(sweep::plan(&g, &sweep_args(&["--r", bad])), Err(CliError::Validation(_))), "{bad}");
    }
    let shrinking = sweep_args(&["--r", "0.3,0.1", "--point-horizon", "2000,1000"]);
    assert!(matches!(sweep::plan(&g, &shrinking), Err(CliError::Validation(m)) if m.contains("shrink")));
    let p = sweep::plan(&g, &sweep_args(&["--r", "0.05,0.3,0.1"])).unwrap();
    let grid: Vec<f64> = p.points.iter().map(|x| x.r.value()).collect();
    assert_eq!(grid, vec![0.3, 0.1, 0.05]);
    let h: Vec<f64> = p.points.iter().map(|x| x.config.horizon).collect();
    assert!(h.windows(2).all(|w| w[0] <= w[1]));
    assert!((h[0] - 1e6).abs() < 1e-6);
    assert_eq!(p.requests.len(), 2);
}

#[test]
fn invalid_arguments_exit_with_two() {
    let root = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 5] = [
        &["analyze"],
        &["--spec", "corpus:nope", "analyze"],
        &["--spec", "corpus:tandem", "sweep", "--r", "0.3,1.5"],
        &["--spec", "corpus:tandem", "verify-bar", "--r", "0.3", "--function", "psi(n=2,kappa=inf)"],
        &["--spec", "corpus:mm1", "routing-oracle", "--paths", "10"],
    ];
    for args in cases {
        let out = gjn(root.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    assert!(fs::read_dir(root.path()).unwrap().next().is_none(), "validation errors write nothing");
}

#[test]
fn single_point_sweep_has_a_degenerate_summary() {
    let root = tempfile::tempdir().unwrap();
    let out = gjn(root.path(), &["--spec", "corpus:mm1", "sweep", "--r", "0.3", "--H0", "2000"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&fs::read(run_dir(&out.stdout).join("report.json")).unwrap()).unwrap();
    let s = &report["summary"][0];
    assert_eq!(s["ratio"], "1");
    assert_eq!(s["mann_kendall"]["p_increasing"], "1");
    assert_eq!(s["increasing_trend"], false);
}

#[test]
fn sweep_has_one_row_per_point_and_statement() {
    let root = tempfile::tempdir().unwrap();
    let out = gjn(
        root.path(),
        &["--spec", "corpus:tandem", "sweep", "--r", "0.3,0.2,0.1,0.05", "--H0", "1000", "--k", "1,2"],
    );
    assert!(out.status.success());
    let dir = run_dir(&out.stdout);
    let csv = fs::read_to_string(dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8);
    let plot = fs::read_to_string(dir.join("plot.gp")).unwrap();
    assert!(plot.contains("'results.csv'") && plot.contains("title 'k=2, n=2'"));
}

#[test]
fn verify_bar_fails_with_three_when_the_interval_collapses() {
    let root = tempfile::tempdir().unwrap();
    let args = ["--spec", "corpus:mm1", "verify-bar", "--r", "0.5", "--horizon", "5000", "--function", "h(k=1)"];
    let ok = gjn(root.path(), &args);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let mut tight = args.to_vec();
    tight.extend_from_slice(&["--confidence", "0.00001"]);
    let fail = gjn(root.path(), &tight);
    assert_eq!(fail.status.code(), Some(3), "{}", String::from_utf8_lossy(&fail.stdout));
    assert!(String::from_utf8_lossy(&fail.stdout).starts_with("FAIL"));
}

#[test]
fn product_form_branches() {
    let root = tempfile::tempdir().unwrap();
    let out = gjn(root.path(), &["--spec", "corpus:tandem", "product-form", "--r", "0.3", "--H0", "20000"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(run_dir(&out.stdout).join("report.json")).unwrap()).unwrap();
    assert_eq!(report["branch"], "qualitative");
    assert!(report["stations"][0]["marginal_fit"].is_null());
    let mm1 = gjn(root.path(), &["--spec", "corpus:mm1", "product-form", "--r", "0.3", "--H0", "100000"]);
    assert_eq!(mm1.status.code(), Some(0), "{}", String::from_utf8_lossy(&mm1.stdout));
    assert!(String::from_utf8_lossy(&mm1.stdout).starts_with("PASS station 1"));
}

#[test]
fn statements_accept_the_fractional_variant() {
    let root = tempfile::tempdir().unwrap();
    let out = gjn(
        root.path(),
        &["--spec", "corpus:feedback-to-front", "statements", "--r", "0.3", "--k", "2", "--eps", "0.5", "--horizon", "3000"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(run_dir(&out.stdout).join("results.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "statements/1");
    assert_eq!(row[3], "1.2000000000000002");
    assert_eq!(row[4], "2.2");
}

#[test]
fn spec_files_load_from_disk() {
    let root = tempfile::tempdir().unwrap();
    let path = root.path().join("mm1.json");
    fs::write(&path, load_spec("corpus:mm1").unwrap().to_json()).unwrap();
    let out = gjn(&root.path().join("out"), &["--spec", path.to_str().unwrap(), "analyze", "--r", "0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(run_dir(&out.stdout).join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["spec"]["alpha"], serde_json::json!(["1"]));
}
