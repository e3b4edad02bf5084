use gjn_core::analysis::{compute_w, monte_carlo_w};
use gjn_core::decimal::dec;
use gjn_core::{RoutingMatrix, SimRng};
use rand::SeedableRng;
use serde::Serialize;

use crate::args::RoutingArgs;
use crate::error::CliError;
use crate::output::Table;
use crate::{Artifacts, Global};

pub const SCHEMA: &str = "routing-oracle/1";
pub const COLUMNS: &[&str] = &["j", "k", "analytic", "estimate", "hits", "paths", "std_error", "z_score"];
pub const MIN_PATHS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    /// 1-based.
    pub j: usize,
    pub k: usize,
    pub analytic: f64,
    pub estimate: f64,
    pub hits: u64,
    pub paths: u64,
    /// Binomial standard error at the larger of the analytic and estimated
    /// variances, so a degenerate estimate cannot hide a mismatch.
    pub std_error: f64,
    /// Zero when both sides are exact and equal, infinite when they are
    /// exact and differ.
    pub z_score: f64,
}

impl OracleRow {
    pub fn passes(&self, limit: f64) -> bool {
        self.z_score.abs() <= limit
    }
}

/// Compares `monte_carlo_w` with `compute_w` on every `(j, k)`, drawing
/// from one generator in row-major order.
pub fn compare(p: &RoutingMatrix<f64>, paths: u64, seed: u64) -> Result<Vec<OracleRow>, CliError> {
    if paths < MIN_PATHS {
        return Err(CliError::invalid(format!("--paths must be at least {MIN_PATHS}, got {paths}")));
    }
    let w = compute_w(p).map_err(|e| CliError::invalid(format!("w-matrix: {e}")))?;
    let mut rng = SimRng::seed_from_u64(seed);
    let n = p.stations();
    let mut rows = Vec::with_capacity(n * n);
    for j in 0..n {
        for k in 0..n {
            let h = monte_carlo_w(p, j, k, paths, &mut rng);
            let a = *w.get(j, k);
            let var = (a * (1.0 - a)).max(h.estimate * (1.0 - h.estimate)).max(0.0);
            let se = (var / paths as f64).sqrt();
            let diff = h.estimate - a;
            let z = if se > 0.0 {
                diff / se
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            rows.push(OracleRow {
                j: j + 1,
                k: k + 1,
                analytic: a,
                estimate: h.estimate,
                hits: h.hits,
                paths,
                std_error: se,
                z_score: z,
            });
        }
    }
    Ok(rows)
}

pub fn run(g: &Global, a: &RoutingArgs) -> Result<Artifacts, CliError> {
    let limit = a.limit.value();
    let rows = compare(g.spec.routing(), a.paths, g.seed)?;
    let mut t = Table::new(SCHEMA, COLUMNS);
    for r in &rows {
        t.push(vec![
            r.j.to_string(),
            r.k.to_string(),
            dec(r.analytic),
            dec(r.estimate),
            r.hits.to_string(),
            r.paths.to_string(),
            dec(r.std_error),
            dec(r.z_score),
        ]);
    }
    let worst = rows.iter().map(|r| r.z_score.abs()).fold(0.0, f64::max);
    let pass = rows.iter().all(|r| r.passes(limit));
    let verdict = if pass { "PASS" } else { "FAIL" };
    let report = serde_json::json!({
        "spec_hash": g.spec.hash(),
        "paths": a.paths,
        "seed": g.seed,
        "limit": dec(limit),
        "max_abs_z": dec(worst),
        "pass": pass,
        "rows": rows.iter().map(|r| serde_json::json!({
            "j": r.j,
            "k": r.k,
            "analytic": dec(r.analytic),
            "estimate": dec(r.estimate),
            "std_error": dec(r.std_error),
            "z_score": dec(r.z_score),
        })).collect::<Vec<_>>(),
    });
    Ok(Artifacts {
        results: t,
        report,
        extra: Vec::new(),
        points: Vec::new(),
        pass,
        lines: vec![format!("{verdict} routing oracle: max |z| = {} over {} entries", dec(worst), rows.len())],
    })
}
