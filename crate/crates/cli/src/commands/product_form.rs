use std::collections::BTreeMap;

use gjn_core::decimal::dec;
use gjn_core::sim::{self, FunctionalSet, Observer, RunConfig, SimState};
use gjn_core::stats::{batch_cell_test, ks_distance_exponential, BatchSummary, HotellingTest};
use gjn_core::{DistributionSpec, NetworkSpec, ScaledNetwork};
use rayon::prelude::*;
use serde_json::json;

use super::est;
use crate::args::ProductFormArgs;
use crate::error::CliError;
use crate::output::Table;
use crate::{run_config, scaled, scheduled_horizon, Artifacts, Global};

pub const SCHEMA: &str = "product-form/1";
pub const COLUMNS: &[&str] = &[
    "station",
    "rho",
    "lambda",
    "mean",
    "mean_half_width",
    "mean_covers_lambda",
    "cells",
    "hotelling_t2",
    "p_value",
    "ks_distance",
];

/// Time spent at each queue length, per station and batch.
#[derive(Debug, Clone)]
pub struct Occupancy {
    /// `[station][batch]`.
    pub time: Vec<Vec<BTreeMap<u64, f64>>>,
}

impl Occupancy {
    fn new(stations: usize, batches: usize) -> Self {
        Self {
            time: vec![vec![BTreeMap::new(); batches]; stations],
        }
    }

    fn merge(&mut self, other: Self) {
        for (a, b) in self.time.iter_mut().zip(other.time) {
            a.extend(b);
        }
    }
}

impl Observer for Occupancy {
    fn on_segment(&mut self, batch: usize, x: &SimState, dt: f64) {
        for (s, batches) in self.time.iter_mut().enumerate() {
            *batches[batch].entry(x.z[s]).or_default() += dt;
        }
    }
}

/// Replications on streams `0..reps`, merged in stream order.
pub fn occupancy(net: &ScaledNetwork, cfg: &RunConfig, reps: u64) -> Result<Occupancy, CliError> {
    let parts: Vec<Occupancy> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut obs = Occupancy::new(net.stations(), cfg.batches);
            sim::run(net, &cfg.with_stream(rep), &FunctionalSet::new(), &mut [&mut obs])?;
            Ok(obs)
        })
        .collect::<Result<_, CliError>>()?;
    let mut it = parts.into_iter();
    let mut acc = it.next().ok_or_else(|| CliError::invalid("--reps must be at least 1"))?;
    for p in it {
        acc.merge(p);
    }
    Ok(acc)
}

pub fn is_jackson(spec: &NetworkSpec) -> bool {
    let exp = |d: &DistributionSpec| matches!(d, DistributionSpec::Exponential);
    (0..spec.stations()).all(|j| {
        spec.arrival_distribution(j).is_none_or(exp) && exp(spec.service_distribution(j))
    })
}

/// Lower edges of `cells` bins with near-equal Geometric(`rho`) mass;
/// `P(Z >= z) = rho^z`.
pub fn geometric_cells(rho: f64, cells: usize) -> Vec<u64> {
    let mut edges = vec![0u64];
    for i in 1..cells {
        let q = 1.0 - i as f64 / cells as f64;
        let b = (q.ln() / rho.ln()).ceil() as u64;
        if b > *edges.last().expect("nonempty") {
            edges.push(b);
        }
    }
    edges
}

pub fn geometric_cell_mass(rho: f64, edges: &[u64]) -> Vec<f64> {
    let tail = |z: u64| rho.powf(z as f64);
    (0..edges.len())
        .map(|i| match edges.get(i + 1) {
            Some(&hi) => tail(edges[i]) - tail(hi),
            None => tail(edges[i]),
        })
        .collect()
}

fn cell_fractions(batch: &BTreeMap<u64, f64>, edges: &[u64]) -> Vec<f64> {
    let total: f64 = batch.values().sum();
    let mut v = vec![0.0; edges.len()];
    for (&z, &t) in batch {
        let c = edges.partition_point(|&e| e <= z) - 1;
        v[c] += t / total;
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationFit {
    /// 1-based.
    pub station: usize,
    pub rho: f64,
    pub lambda: f64,
    /// Time average of `r^j Z_j`.
    pub mean: BatchSummary,
    pub cells: usize,
    /// Marginal fit against Geometric(`rho`); exact branch only.
    pub fit: Option<HotellingTest>,
    /// KS distance of `r^j Z_j` to the exponential with the same mean.
    pub ks_distance: f64,
}

impl StationFit {
    pub fn passes(&self, level: f64) -> bool {
        self.mean.covers(self.lambda) && self.fit.as_ref().is_some_and(|f| f.p_value > level)
    }
}

pub fn fit(net: &ScaledNetwork, occ: &Occupancy, cells: usize, confidence: f64, exact: bool) -> Vec<StationFit> {
    (0..net.stations())
        .map(|s| {
            let scale = net.scale_of(s);
            let batches = &occ.time[s];
            let means: Vec<f64> = batches
                .iter()
                .map(|b| {
                    let total: f64 = b.values().sum();
                    b.iter().map(|(&z, &t)| scale * z as f64 * t).sum::<f64>() / total
                })
                .collect();
            let mean = BatchSummary::from_batches(&means, confidence);
            let mut pooled: BTreeMap<u64, f64> = BTreeMap::new();
            for b in batches {
                for (&z, &t) in b {
                    *pooled.entry(z).or_default() += t;
                }
            }
            let sample: Vec<(f64, f64)> = pooled.iter().map(|(&z, &t)| (scale * z as f64, t)).collect();
            let ks = ks_distance_exponential(&sample, mean.mean);
            let rho = net.rho()[s];
            let (fit, ncells) = if exact {
                let edges = geometric_cells(rho, cells);
                let expected = geometric_cell_mass(rho, &edges);
                let obs: Vec<Vec<f64>> = batches.iter().map(|b| cell_fractions(b, &edges)).collect();
                (batch_cell_test(&obs, &expected), edges.len())
            } else {
                (None, 0)
            };
            StationFit {
                station: s + 1,
                rho,
                lambda: net.lambda()[s],
                mean,
                cells: ncells,
                fit,
                ks_distance: ks,
            }
        })
        .collect()
}

pub fn run_command(g: &Global, a: &ProductFormArgs) -> Result<(bool, Vec<StationFit>), CliError> {
    if a.cells < 2 {
        return Err(CliError::invalid("--cells must be at least 2"));
    }
    let net = scaled(&g.spec, &a.r)?;
    let cfg = run_config(&a.run, scheduled_horizon(a.h0.value(), a.r.value()), g.seed)?;
    let exact = is_jackson(&g.spec);
    if exact && a.run.reps as usize * cfg.batches <= a.cells {
        return Err(CliError::invalid(format!(
            "the marginal fit needs more than {} batches in total",
            a.cells
        )));
    }
    let occ = occupancy(&net, &cfg, a.run.reps)?;
    Ok((exact, fit(&net, &occ, a.cells, cfg.confidence, exact)))
}

pub fn run(g: &Global, a: &ProductFormArgs) -> Result<Artifacts, CliError> {
    let (exact, fits) = run_command(g, a)?;
    let level = a.level.value();
    let mut t = Table::new(SCHEMA, COLUMNS);
    let mut lines = Vec::new();
    for f in &fits {
        let mut row = vec![f.station.to_string(), dec(f.rho), dec(f.lambda)];
        row.extend(est(&f.mean));
        row.push(f.mean.covers(f.lambda).to_string());
        row.push(f.cells.to_string());
        let (t2, p) = f.fit.as_ref().map_or((String::new(), String::new()), |h| (dec(h.t2), dec(h.p_value)));
        row.push(t2);
        row.push(p.clone());
        row.push(dec(f.ks_distance));
        t.push(row);
        if exact {
            let verdict = if f.passes(level) { "PASS" } else { "FAIL" };
            lines.push(format!(
                "{verdict} station {}: E[r^jZ_j] = {} +- {} vs {}, marginal fit p = {p}",
                f.station,
                dec(f.mean.mean),
                dec(f.mean.half_width),
                dec(f.lambda)
            ));
        } else {
            lines.push(format!("station {}: KS distance {}", f.station, dec(f.ks_distance)));
        }
    }
    let pass = !exact || fits.iter().all(|f| f.passes(level));
    let report = json!({
        "spec_hash": g.spec.hash(),
        "r": a.r,
        "branch": if exact { "jackson" } else { "qualitative" },
        "level": dec(level),
        "pass": pass,
        "stations": fits.iter().map(|f| json!({
            "station": f.station,
            "rho": dec(f.rho),
            "lambda": dec(f.lambda),
            "mean": {
                "estimate": dec(f.mean.mean),
                "half_width": dec(f.mean.half_width),
                "confidence": dec(f.mean.confidence),
                "batches": f.mean.batches,
                "covers_lambda": f.mean.covers(f.lambda),
            },
            "marginal_fit": f.fit.as_ref().map(|h| json!({
                "cells": f.cells,
                "t2": dec(h.t2),
                "f": dec(h.f),
                "dof": [h.dof.0, h.dof.1],
                "p_value": dec(h.p_value),
            })),
            "ks_distance": dec(f.ks_distance),
        })).collect::<Vec<_>>(),
    });
    Ok(Artifacts {
        results: t,
        report,
        extra: Vec::new(),
        points: Vec::new(),
        pass,
        lines,
    })
}
