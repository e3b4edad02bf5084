use gjn_core::bar::{verify_bar_many, BarResidualReport, Replicated};
use gjn_core::decimal::dec;
use gjn_core::testfn::{parse_selector, truncated_family, FunctionContext, TestFunction};
use serde_json::json;

use super::est;
use crate::args::VerifyBarArgs;
use crate::error::CliError;
use crate::output::Table;
use crate::{run_config, scaled, Artifacts, Global};

pub const SCHEMA: &str = "verify-bar/1";
pub const COLUMNS: &[&str] = &[
    "function",
    "bound",
    "interior",
    "interior_half_width",
    "jumps",
    "jumps_half_width",
    "residual",
    "residual_half_width",
    "pass",
];
pub const DEFAULT_HORIZON: f64 = 1e5;

pub fn row(rep: &BarResidualReport) -> Vec<String> {
    let mut v = vec![rep.function.clone(), dec(rep.bound)];
    v.extend(est(&rep.interior));
    v.extend(est(&rep.jumps));
    v.extend(est(&rep.residual));
    v.push(rep.passes().to_string());
    v
}

pub fn run(g: &Global, a: &VerifyBarArgs) -> Result<Artifacts, CliError> {
    let net = scaled(&g.spec, &a.r)?;
    let cfg = run_config(&a.run, DEFAULT_HORIZON, g.seed)?;
    let ctx = FunctionContext::new(net.clone())?;
    let functions: Vec<TestFunction> = if a.functions.is_empty() {
        truncated_family(&ctx)?
    } else {
        a.functions
            .iter()
            .map(|s| parse_selector(s, &ctx).map_err(|e| CliError::invalid(format!("{s:?}: {e}"))))
            .collect::<Result<_, _>>()?
    };
    let reports = verify_bar_many(&net, &functions, &Replicated::new(cfg, a.run.reps))?;
    let mut t = Table::new(SCHEMA, COLUMNS);
    let mut lines = Vec::new();
    for rep in &reports {
        t.push(row(rep));
        let verdict = if rep.passes() { "PASS" } else { "FAIL" };
        lines.push(format!(
            "{verdict} {}: residual {} +- {}",
            rep.function,
            dec(rep.residual.mean),
            dec(rep.residual.half_width)
        ));
    }
    let passed = reports.iter().filter(|r| r.passes()).count();
    let report = json!({
        "spec_hash": g.spec.hash(),
        "r": a.r,
        "passed": passed,
        "functions": reports.len(),
        "pass": passed == reports.len(),
        "reports": reports.iter().map(BarResidualReport::to_json).collect::<Vec<_>>(),
    });
    Ok(Artifacts {
        results: t,
        report,
        extra: Vec::new(),
        points: Vec::new(),
        pass: passed == reports.len(),
        lines,
    })
}
