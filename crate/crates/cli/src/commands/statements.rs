use gjn_core::bar::{estimate_statements, Replicated, StatementEstimates, StatementRequest};
use gjn_core::decimal::dec;
use gjn_core::sim::RunConfig;

use super::est;
use crate::args::StatementsArgs;
use crate::error::CliError;
use crate::output::Table;
use crate::{run_config, scaled, scheduled_horizon, Artifacts, Global};

pub const SCHEMA: &str = "statements/1";
pub const COLUMNS: &[&str] = &[
    "r",
    "k",
    "n",
    "M",
    "horizon",
    "replications",
    "seed",
    "batches",
    "s1",
    "s1_half_width",
    "s2",
    "s2_half_width",
    "s3",
    "s3_half_width",
    "s4",
    "s4_half_width",
];

pub fn row(r: &str, e: &StatementEstimates, cfg: &RunConfig, reps: u64) -> Vec<String> {
    let mut v = vec![
        r.to_string(),
        e.request.k.to_string(),
        dec(e.request.n),
        dec(e.request.m),
        dec(cfg.horizon),
        reps.to_string(),
        cfg.seed.to_string(),
        e.s1.batches.to_string(),
    ];
    for (_, s) in e.all() {
        v.extend(est(s));
    }
    v
}

pub fn request(g: &Global, a: &StatementsArgs) -> Result<StatementRequest, CliError> {
    let m = a.m.as_ref().map_or(g.spec.moment_order(), |d| d.value());
    match (&a.eps, &a.n) {
        (Some(eps), _) => {
            if !(eps.value() > 0.0) {
                return Err(CliError::invalid(format!("--eps must be positive, got {eps}")));
            }
            Ok(StatementRequest::fractional(a.k, m, eps.value()))
        }
        (None, Some(n)) => Ok(StatementRequest { k: a.k, n: n.value(), m }),
        (None, None) => Err(CliError::invalid("--n or --eps is required")),
    }
}

pub fn run(g: &Global, a: &StatementsArgs) -> Result<Artifacts, CliError> {
    let net = scaled(&g.spec, &a.r)?;
    let req = request(g, a)?;
    let cfg = run_config(&a.run, scheduled_horizon(a.h0.value(), a.r.value()), g.seed)?;
    let e = estimate_statements(&net, req, &Replicated::new(cfg.clone(), a.run.reps))?;
    let mut t = Table::new(SCHEMA, COLUMNS);
    t.push(row(a.r.text(), &e, &cfg, a.run.reps));
    let lines = e
        .all()
        .iter()
        .map(|(name, s)| format!("{name} = {} +- {}", dec(s.mean), dec(s.half_width)))
        .collect();
    let finite = e.is_finite();
    Ok(Artifacts {
        results: t,
        report: serde_json::json!({
            "spec_hash": g.spec.hash(),
            "finite": finite,
            "estimates": e.to_json(),
        }),
        extra: Vec::new(),
        points: Vec::new(),
        pass: true,
        lines,
    })
}
