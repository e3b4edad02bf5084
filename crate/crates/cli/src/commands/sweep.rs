use gjn_core::analysis::{compute_r0, compute_w};
use gjn_core::bar::{estimate_statements_many, Replicated, StatementEstimates, StatementRequest};
use gjn_core::decimal::dec;
use gjn_core::sim::RunConfig;
use gjn_core::stats::{mann_kendall, MannKendall};
use gjn_core::Decimal;
use rayon::prelude::*;
use serde_json::json;

use super::statements;
use crate::args::SweepArgs;
use crate::error::CliError;
use crate::manifest::PointRef;
use crate::output::{RunDir, Table};
use crate::{run_config, scaled, scheduled_horizon, Artifacts, Global};

pub const SCHEMA: &str = "sweep/1";
pub const COLUMNS: &[&str] = statements::COLUMNS;
pub const SUMMARY_SCHEMA: &str = "sweep-summary/1";
pub const SUMMARY_COLUMNS: &[&str] = &[
    "k",
    "n",
    "points",
    "s1_min",
    "s1_max",
    "ratio",
    "mk_s",
    "mk_p_increasing",
    "increasing_trend",
    "bounded",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub r: Decimal,
    pub config: RunConfig,
}

/// Validated sweep: grid in descending `r`, each point below the clamped
/// `r0`, horizons nondecreasing as `r` falls.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub points: Vec<SweepPoint>,
    pub requests: Vec<StatementRequest>,
    pub replications: u64,
    pub r0: f64,
}

pub fn plan(g: &Global, a: &SweepArgs) -> Result<SweepPlan, CliError> {
    if a.r.is_empty() {
        return Err(CliError::invalid("empty r-grid"));
    }
    if !a.point_horizon.is_empty() && a.point_horizon.len() != a.r.len() {
        return Err(CliError::invalid(format!(
            "--point-horizon has {} entries for {} grid points",
            a.point_horizon.len(),
            a.r.len()
        )));
    }
    let w = compute_w(g.spec.routing()).map_err(|e| CliError::invalid(format!("w-matrix: {e}")))?;
    let r0 = compute_r0(&w).clamped;
    let mut grid: Vec<(Decimal, f64)> = Vec::with_capacity(a.r.len());
    for (i, r) in a.r.iter().enumerate() {
        let v = r.value();
        if !(v > 0.0 && v < r0) {
            return Err(CliError::invalid(format!(
                "grid point r = {r} must lie in (0, r0) with r0 = {}",
                dec(r0)
            )));
        }
        let h = a
            .point_horizon
            .get(i)
            .map_or_else(|| scheduled_horizon(a.h0.value(), v), Decimal::value);
        grid.push((r.clone(), h));
    }
    grid.sort_by(|x, y| y.0.value().total_cmp(&x.0.value()));
    for pair in grid.windows(2) {
        if pair[0].0.value() == pair[1].0.value() {
            return Err(CliError::invalid(format!("grid point r = {} is repeated", pair[1].0)));
        }
        if pair[1].1 < pair[0].1 {
            return Err(CliError::invalid(format!(
                "horizon must not shrink as r decreases: {} at r = {} after {} at r = {}",
                dec(pair[1].1),
                pair[1].0,
                dec(pair[0].1),
                pair[0].0
            )));
        }
    }
    let m = g.spec.moment_order();
    let ks: Vec<usize> = if a.k.is_empty() {
        (1..=g.spec.covered_stations()).collect()
    } else {
        a.k.clone()
    };
    let ns: Vec<f64> = if a.n.is_empty() {
        vec![m]
    } else {
        a.n.iter().map(Decimal::value).collect()
    };
    let requests = ks
        .iter()
        .flat_map(|&k| ns.iter().map(move |&n| StatementRequest { k, n, m }))
        .collect();
    let points = grid
        .into_iter()
        .enumerate()
        .map(|(i, (r, h))| {
            let mut run = a.run.clone();
            run.horizon = Some(Decimal::from_f64(h));
            Ok(SweepPoint {
                r,
                config: run_config(&run, h, g.seed.wrapping_add(i as u64))?,
            })
        })
        .collect::<Result<_, CliError>>()?;
    Ok(SweepPlan {
        points,
        requests,
        replications: a.run.reps,
        r0,
    })
}

/// Flatness summary of S1 along the grid for one `(k, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSummary {
    pub k: usize,
    pub n: f64,
    /// S1 in grid order, largest `r` first.
    pub s1: Vec<f64>,
    pub ratio: f64,
    /// Trend of S1 as `r` decreases.
    pub trend: MannKendall,
    pub increasing_trend: bool,
    pub bounded: bool,
}

pub fn summarize(
    requests: &[StatementRequest],
    estimates: &[Vec<StatementEstimates>],
    max_ratio: f64,
    level: f64,
) -> Vec<SeriesSummary> {
    requests
        .iter()
        .enumerate()
        .map(|(i, req)| {
            let s1: Vec<f64> = estimates.iter().map(|p| p[i].s1.mean).collect();
            let lo = s1.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = s1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ratio = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            let trend = mann_kendall(&s1);
            let increasing_trend = trend.rejects_increasing(level);
            SeriesSummary {
                k: req.k,
                n: req.n,
                ratio,
                bounded: ratio <= max_ratio && !increasing_trend,
                trend,
                increasing_trend,
                s1,
            }
        })
        .collect()
}

/// gnuplot script drawing S1 against `r` for every `(k, n)` series.
pub fn gnuplot_script(series: &[SeriesSummary]) -> String {
    let col = |name: &str| 2 + COLUMNS.iter().position(|c| *c == name).expect("column");
    let (rc, kc, nc, s1, hw) = (col("r"), col("k"), col("n"), col("s1"), col("s1_half_width"));
    let mut s = String::from(
        "# S1 against r for each (k, n); run with `gnuplot plot.gp`.\n\
         set datafile separator ','\n\
         set terminal pngcairo size 900,600\n\
         set output 's1.png'\n\
         set logscale x\n\
         set xlabel 'r'\n\
         set ylabel 'S1'\n\
         set key top left\n",
    );
    let plots: Vec<String> = series
        .iter()
        .map(|x| {
            format!(
                "'results.csv' every ::1 using {rc}:(${kc}=={} && ${nc}=={} ? ${s1} : 1/0):{hw} \
                 with yerrorlines title 'k={}, n={}'",
                x.k,
                dec(x.n),
                x.k,
                dec(x.n)
            )
        })
        .collect();
    s.push_str("plot ");
    s.push_str(&plots.join(", \\\n     "));
    s.push('\n');
    s
}

pub fn run(g: &Global, a: &SweepArgs, dir: &RunDir) -> Result<Artifacts, CliError> {
    let plan = plan(g, a)?;
    let nets = plan
        .points
        .iter()
        .map(|p| scaled(&g.spec, &p.r))
        .collect::<Result<Vec<_>, _>>()?;
    let results: Vec<(Vec<StatementEstimates>, Table)> = plan
        .points
        .par_iter()
        .zip(&nets)
        .enumerate()
        .map(|(i, (p, net))| {
            let plan_i = Replicated::new(p.config.clone(), plan.replications);
            let est = estimate_statements_many(net, &plan.requests, &plan_i)?;
            let mut t = Table::new(SCHEMA, COLUMNS);
            for e in &est {
                t.push(statements::row(p.r.text(), e, &p.config, plan.replications));
            }
            dir.write(&point_file(i), &t.to_csv())?;
            Ok((est, t))
        })
        .collect::<Result<_, CliError>>()?;

    let mut table = Table::new(SCHEMA, COLUMNS);
    let mut estimates = Vec::with_capacity(results.len());
    for (est, t) in results {
        table.rows.extend(t.rows);
        estimates.push(est);
    }
    let series = summarize(&plan.requests, &estimates, a.max_ratio.value(), a.trend_level.value());
    let mut summary = Table::new(SUMMARY_SCHEMA, SUMMARY_COLUMNS);
    let mut lines = Vec::new();
    for x in &series {
        let lo = x.s1.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.s1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        summary.push(vec![
            x.k.to_string(),
            dec(x.n),
            x.s1.len().to_string(),
            dec(lo),
            dec(hi),
            dec(x.ratio),
            x.trend.s.to_string(),
            dec(x.trend.p_increasing),
            x.increasing_trend.to_string(),
            x.bounded.to_string(),
        ]);
        lines.push(format!(
            "k={} n={}: max/min {} Mann-Kendall p {}{}",
            x.k,
            dec(x.n),
            dec(x.ratio),
            dec(x.trend.p_increasing),
            if x.bounded { "" } else { " (not flat)" }
        ));
    }
    let points: Vec<PointRef> = plan
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| PointRef {
            r: p.r.text().to_string(),
            horizon: dec(p.config.horizon),
            seed: p.config.seed,
            replications: plan.replications,
            file: point_file(i),
        })
        .collect();
    let report = json!({
        "spec_hash": g.spec.hash(),
        "r0_clamped": dec(plan.r0),
        "grid": plan.points.iter().map(|p| p.r.text()).collect::<Vec<_>>(),
        "horizons": plan.points.iter().map(|p| dec(p.config.horizon)).collect::<Vec<_>>(),
        "estimates": estimates.iter().flatten().map(StatementEstimates::to_json).collect::<Vec<_>>(),
        "summary": series.iter().map(|x| json!({
            "k": x.k,
            "n": dec(x.n),
            "s1": x.s1.iter().map(|&v| dec(v)).collect::<Vec<_>>(),
            "ratio": dec(x.ratio),
            "mann_kendall": {
                "s": x.trend.s,
                "p_increasing": dec(x.trend.p_increasing),
                "exact": x.trend.exact,
            },
            "increasing_trend": x.increasing_trend,
            "bounded": x.bounded,
        })).collect::<Vec<_>>(),
    });
    Ok(Artifacts {
        results: table,
        report,
        extra: vec![
            ("summary.csv".into(), summary.to_csv()),
            ("plot.gp".into(), gnuplot_script(&series).into_bytes()),
        ],
        points,
        pass: true,
        lines,
    })
}

fn point_file(i: usize) -> String {
    format!("points/{i:03}.csv")
}
