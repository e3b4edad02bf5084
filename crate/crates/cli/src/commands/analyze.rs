use gjn_core::{BigRational, Decimal, ExactReport, Report};

use crate::args::AnalyzeArgs;
use crate::error::CliError;
use crate::output::Table;
use crate::{Artifacts, Global};

pub const SCHEMA: &str = "analyze/1";
pub const COLUMNS: &[&str] = &["r", "k", "lhs", "identity_rhs", "lower_bound", "identity_gap"];

fn check_scale(r: &Decimal) -> Result<(), CliError> {
    let v = r.value();
    if !(v > 0.0 && v < 1.0) {
        return Err(CliError::invalid(format!("scale r = {r} must lie in (0, 1)")));
    }
    Ok(())
}

pub fn report(g: &Global, a: &AnalyzeArgs) -> Result<serde_json::Value, CliError> {
    if a.r.is_empty() {
        return Err(CliError::invalid("need at least one --r"));
    }
    let mut scales = Vec::new();
    for r in &a.r {
        check_scale(r)?;
        let rep = if a.exact {
            ExactReport::compute(&g.spec, r.to_scalar::<BigRational>())?.to_json()
        } else {
            Report::compute(&g.spec, r.value())?.to_json()
        };
        scales.push(rep);
    }
    Ok(serde_json::json!({
        "spec_hash": g.spec.hash(),
        "stations": g.spec.stations(),
        "exact": a.exact,
        "scales": scales,
    }))
}

pub fn run(g: &Global, a: &AnalyzeArgs) -> Result<Artifacts, CliError> {
    let report = report(g, a)?;
    let mut t = Table::new(SCHEMA, COLUMNS);
    for scale in report["scales"].as_array().expect("scales") {
        let r = scale["r"].as_str().expect("r").to_string();
        for d in scale["drift"].as_array().expect("drift") {
            let field = |k: &str| d[k].as_str().expect("drift field").to_string();
            t.push(vec![
                r.clone(),
                d["k"].to_string(),
                field("lhs"),
                field("identity_rhs"),
                field("lower_bound"),
                field("identity_gap"),
            ]);
        }
    }
    let text = serde_json::to_string_pretty(&report).expect("json serializes");
    Ok(Artifacts {
        results: t,
        report,
        extra: Vec::new(),
        points: Vec::new(),
        pass: true,
        lines: vec![text],
    })
}
