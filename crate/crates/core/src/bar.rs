//! Both sides of the basic adjoint relationship and the statement
//! estimators, from simulated sample paths.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::decimal::dec;
use crate::network::ScaledNetwork;
use crate::sim::{
    power, run, EventKind, Functional, FunctionalSet, JumpRecord, Observer, Provenance,
    QueueResidualMoment, ResidualTerms, RunConfig, RunError, RunOutput, SegmentRule, SimState,
};
use crate::stats::{ratio_summary, BatchSummary};
use crate::testfn::TestFunction;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BarError {
    #[error("{0} is unbounded; only truncated test functions belong to the BAR class")]
    Unbounded(String),
    #[error("{0} was built for a different network or scale")]
    ContextMismatch(String),
    #[error("k = {k} outside 1..={max}")]
    Station { k: usize, max: usize },
    #[error("exponent n = {n} must lie in [0, M = {m}]")]
    Exponent { n: f64, m: f64 },
    #[error("moment order {0} must be at least 1")]
    MomentOrder(f64),
    #[error("need at least one replication")]
    Replications,
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Replications run on streams `0..replications` and pool their batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicated {
    pub run: RunConfig,
    pub replications: u64,
}

impl Replicated {
    pub fn new(run: RunConfig, replications: u64) -> Self {
        Self { run, replications }
    }
}

/// Runs the replications in parallel and merges them in stream order, so the
/// pooled output does not depend on scheduling.
fn replicate<T: Send>(
    plan: &Replicated,
    one: impl Fn(&RunConfig) -> Result<T, BarError> + Sync,
    merge: impl Fn(&mut T, T),
) -> Result<T, BarError> {
    if plan.replications == 0 {
        return Err(BarError::Replications);
    }
    plan.run.validate()?;
    let mut parts: Vec<T> = (0..plan.replications)
        .into_par_iter()
        .map(|rep| one(&plan.run.with_stream(rep)))
        .collect::<Result<_, _>>()?;
    let rest = parts.split_off(1);
    let mut acc = parts.pop().expect("one replication");
    for p in rest {
        merge(&mut acc, p);
    }
    Ok(acc)
}

/// Per-batch sums of a jump functional, split by event kind.
#[derive(Debug, Clone)]
struct KindBatchSums {
    /// `[kind][batch]`.
    sums: Vec<Vec<f64>>,
}

impl KindBatchSums {
    fn new(kinds: usize, batches: usize) -> Self {
        Self {
            sums: vec![vec![0.0; batches]; kinds],
        }
    }

    fn merge(&mut self, other: Self) {
        for (a, b) in self.sums.iter_mut().zip(other.sums) {
            a.extend(b);
        }
    }
}

struct JumpObserver<'a> {
    functions: &'a [TestFunction],
    stations: usize,
    sums: Vec<KindBatchSums>,
}

impl Observer for JumpObserver<'_> {
    fn on_jump(&mut self, batch: usize, rec: &JumpRecord, post: &SimState) {
        let kind = rec.kind.index(self.stations);
        for (f, acc) in self.functions.iter().zip(&mut self.sums) {
            // The engine's post state, read from the same clocks that the
            // segment integrals use, keeps the pathwise identity tight.
            acc.sums[kind][batch] += f.evaluate(post) - f.evaluate(&rec.pre);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpTerm {
    pub kind: EventKind,
    pub label: String,
    pub events: u64,
    /// `alpha_j` or `lambda_j`.
    pub analytic_rate: f64,
    pub observed_rate: f64,
    /// Event average of `Delta f`, the Palm expectation estimate.
    pub palm_mean: f64,
    /// `sum Delta f / T`, the form entering the residual.
    pub contribution: f64,
}

impl JumpTerm {
    /// `rate * E_palm[Delta f]` with the analytic rate; equals
    /// `contribution` up to the rate's sampling error because the Palm
    /// normalization by the event rate cancels the prefactor.
    pub fn via_analytic_rate(&self) -> f64 {
        self.analytic_rate * self.palm_mean
    }
}

/// Multiplier on the half-width in the residual test.
pub const BAR_PASS_MULTIPLIER: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarResidualReport {
    pub function: String,
    pub bound: f64,
    /// `-E_pi[A f]`.
    pub interior: BatchSummary,
    /// `sum_j alpha_j E_e,j[Delta f] + sum_j lambda_j E_s,j[Delta f]`.
    pub jumps: BatchSummary,
    pub jump_terms: Vec<JumpTerm>,
    /// `interior - jumps`, signed.
    pub residual: BatchSummary,
    pub exact_quadrature: bool,
    pub provenance: Provenance,
}

impl BarResidualReport {
    /// `|residual| <= 3 half-width`; an identically zero residual passes.
    pub fn passes(&self) -> bool {
        let r = self.residual.mean.abs();
        let hw = self.residual.half_width;
        (r == 0.0 && hw == 0.0) || r <= BAR_PASS_MULTIPLIER * hw
    }

    pub fn to_json(&self) -> serde_json::Value {
        let s = |b: &BatchSummary| {
            serde_json::json!({
                "estimate": dec(b.mean),
                "half_width": dec(b.half_width),
                "std_error": dec(b.std_error),
                "confidence": dec(b.confidence),
                "batches": b.batches,
            })
        };
        serde_json::json!({
            "function": self.function,
            "bound": dec(self.bound),
            "interior": s(&self.interior),
            "jumps": s(&self.jumps),
            "residual": s(&self.residual),
            "pass": self.passes(),
            "exact_quadrature": self.exact_quadrature,
            "jump_terms": self.jump_terms.iter().map(|t| serde_json::json!({
                "kind": t.label,
                "events": t.events,
                "analytic_rate": dec(t.analytic_rate),
                "observed_rate": dec(t.observed_rate),
                "palm_mean": dec(t.palm_mean),
                "contribution": dec(t.contribution),
            })).collect::<Vec<_>>(),
            "provenance": self.provenance,
        })
    }
}

fn check_context(net: &ScaledNetwork, f: &TestFunction) -> Result<(), BarError> {
    if f.context().network() != net {
        return Err(BarError::ContextMismatch(f.to_string()));
    }
    Ok(())
}

fn register(set: &mut FunctionalSet, f: Arc<dyn Functional>) -> bool {
    match f.rule() {
        SegmentRule::NonPolynomial => {
            set.register_adaptive(f);
            false
        }
        _ => {
            set.register(f).expect("polynomial functional");
            true
        }
    }
}

struct BarRun {
    out: RunOutput,
    jumps: Vec<KindBatchSums>,
}

/// BAR residuals for several bounded functions from one set of runs.
pub fn verify_bar_many(
    net: &ScaledNetwork,
    functions: &[TestFunction],
    plan: &Replicated,
) -> Result<Vec<BarResidualReport>, BarError> {
    for f in functions {
        check_context(net, f)?;
        if !f.is_bounded() {
            return Err(BarError::Unbounded(f.to_string()));
        }
    }
    let stations = net.stations();
    let mut set = FunctionalSet::new();
    let exact: Vec<bool> = functions
        .iter()
        .map(|f| register(&mut set, Arc::new(f.neg_interior())))
        .collect();
    let pooled = replicate(
        plan,
        |cfg| {
            let mut obs = JumpObserver {
                functions,
                stations,
                sums: vec![KindBatchSums::new(2 * stations, cfg.batches); functions.len()],
            };
            let out = run(net, cfg, &set, &mut [&mut obs])?;
            Ok(BarRun {
                out,
                jumps: obs.sums,
            })
        },
        |acc, other| {
            acc.out.merge(other.out);
            for (a, b) in acc.jumps.iter_mut().zip(other.jumps) {
                a.merge(b);
            }
        },
    )?;

    let conf = plan.run.confidence;
    let windows = &pooled.out.integrals.batch_windows;
    let horizon: f64 = windows.iter().sum();
    let palm = &pooled.out.palm;
    let prov = Provenance::new(net, &plan.run, plan.replications, horizon);
    let reports = functions
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let interior_b = &pooled.out.integrals.batch_sums[i];
            let jump_b: Vec<f64> = (0..windows.len())
                .map(|b| pooled.jumps[i].sums.iter().map(|k| k[b]).sum())
                .collect();
            let resid_b: Vec<f64> = interior_b.iter().zip(&jump_b).map(|(a, j)| a - j).collect();
            let jump_terms = (0..2 * stations)
                .map(|kind_ix| {
                    let kind = EventKind::from_index(kind_ix, stations);
                    let events = palm.count(kind);
                    let total: f64 = pooled.jumps[i].sums[kind_ix].iter().sum();
                    let analytic_rate = match kind {
                        EventKind::ExternalArrival(j) => net.alpha()[j],
                        EventKind::ServiceCompletion(j) => net.lambda()[j],
                    };
                    JumpTerm {
                        kind,
                        label: kind.label(),
                        events,
                        analytic_rate,
                        observed_rate: events as f64 / horizon,
                        palm_mean: if events > 0 { total / events as f64 } else { 0.0 },
                        contribution: total / horizon,
                    }
                })
                .filter(|t| t.analytic_rate > 0.0)
                .collect();
            BarResidualReport {
                function: f.to_string(),
                bound: f.bound().expect("checked bounded"),
                interior: ratio_summary(interior_b, windows, conf),
                jumps: ratio_summary(&jump_b, windows, conf),
                jump_terms,
                residual: ratio_summary(&resid_b, windows, conf),
                exact_quadrature: exact[i],
                provenance: prov.clone(),
            }
        })
        .collect();
    Ok(reports)
}

pub fn verify_bar(
    net: &ScaledNetwork,
    f: &TestFunction,
    plan: &Replicated,
) -> Result<BarResidualReport, BarError> {
    Ok(verify_bar_many(net, std::slice::from_ref(f), plan)?
        .pop()
        .expect("one report"))
}

/// What to estimate: 1-based station `k`, exponent `n`, moment order `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatementRequest {
    pub k: usize,
    pub n: f64,
    pub m: f64,
}

impl StatementRequest {
    /// Exponents for the real-order variant: `beta = M + eps/(M + eps)`,
    /// `n = beta - 1` and moment order `beta`.
    pub fn fractional(k: usize, m: f64, eps: f64) -> Self {
        let beta = m + eps / (m + eps);
        Self {
            k,
            n: beta - 1.0,
            m: beta,
        }
    }
}

/// Time averages (S1, S3) and summed Palm event averages (S2, S4) of
/// `(r^k Z_k)^n` and `(r^k Z_k)^n psi_{M-n}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatementEstimates {
    pub request: StatementRequest,
    pub r: f64,
    pub s1: BatchSummary,
    pub s2: BatchSummary,
    pub s3: BatchSummary,
    pub s4: BatchSummary,
    /// Event kinds whose Palm averages enter S2 and S4.
    pub palm_kinds: Vec<String>,
    pub provenance: Provenance,
}

impl StatementEstimates {
    pub fn all(&self) -> [(&'static str, &BatchSummary); 4] {
        [
            ("S1", &self.s1),
            ("S2", &self.s2),
            ("S3", &self.s3),
            ("S4", &self.s4),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.all()
            .iter()
            .all(|(_, s)| s.mean.is_finite() && s.half_width.is_finite())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut m = serde_json::Map::new();
        m.insert("k".into(), self.request.k.into());
        m.insert("n".into(), dec(self.request.n).into());
        m.insert("M".into(), dec(self.request.m).into());
        m.insert("r".into(), dec(self.r).into());
        for (name, s) in self.all() {
            m.insert(
                name.into(),
                serde_json::json!({
                    "estimate": dec(s.mean),
                    "half_width": dec(s.half_width),
                    "confidence": dec(s.confidence),
                    "batches": s.batches,
                }),
            );
        }
        m.insert("palm_kinds".into(), self.palm_kinds.clone().into());
        m.insert("provenance".into(), serde_json::to_value(&self.provenance).expect("serializable"));
        serde_json::Value::Object(m)
    }
}

/// Residual coordinates of `psi` at moment order `m`: interarrival residuals
/// of stations `j < floor(m) min J` with `alpha_j > 0`, and every service
/// residual.
pub fn psi_terms(net: &ScaledNetwork, m: f64) -> ResidualTerms {
    let covered = (m.floor() as usize).min(net.stations());
    ResidualTerms {
        arrivals: (0..covered).filter(|&j| net.alpha()[j] > 0.0).collect(),
        services: (0..net.stations()).collect(),
    }
}

struct PalmStatementObserver {
    /// `(S1 integrand, S3 integrand)` per request.
    integrands: Vec<(QueueResidualMoment, QueueResidualMoment)>,
    stations: usize,
    /// Per request, `[kind][batch]` sums of the two integrands at pre-jump
    /// states.
    num: Vec<(KindBatchSums, KindBatchSums)>,
}

impl Observer for PalmStatementObserver {
    fn on_jump(&mut self, batch: usize, rec: &JumpRecord, _post: &SimState) {
        let kind = rec.kind.index(self.stations);
        for ((s1, s3), (n1, n3)) in self.integrands.iter().zip(&mut self.num) {
            n1.sums[kind][batch] += s1.value(&rec.pre);
            n3.sums[kind][batch] += s3.value(&rec.pre);
        }
    }
}

struct StatementRun {
    out: RunOutput,
    num: Vec<(KindBatchSums, KindBatchSums)>,
}

/// Sum over kinds of ratio estimators, with the per-batch linearizations
/// added so the CI reflects their dependence.
fn summed_palm(num: &KindBatchSums, counts: &[Vec<u64>], kinds: &[usize], conf: f64) -> BatchSummary {
    let batches = counts[0].len();
    let mut est = 0.0;
    let mut dev = vec![0.0; batches];
    for &k in kinds {
        let c: Vec<f64> = counts[k].iter().map(|&v| v as f64).collect();
        let s = ratio_summary(&num.sums[k], &c, conf);
        let total: f64 = c.iter().sum();
        let mean_count = total / batches as f64;
        est += s.mean;
        for (b, d) in dev.iter_mut().enumerate() {
            *d += s.mean + (num.sums[k][b] - s.mean * c[b]) / mean_count;
        }
    }
    BatchSummary::from_linearized(est, &dev, conf)
}

fn check_request(net: &ScaledNetwork, req: &StatementRequest) -> Result<(), BarError> {
    if !(req.m >= 1.0 && req.m.is_finite()) {
        return Err(BarError::MomentOrder(req.m));
    }
    let max = (req.m.floor() as usize).min(net.stations());
    if req.k < 1 || req.k > max {
        return Err(BarError::Station { k: req.k, max });
    }
    if !(req.n >= 0.0 && req.n <= req.m) {
        return Err(BarError::Exponent { n: req.n, m: req.m });
    }
    Ok(())
}

/// Statement estimates for several requests from one set of runs.
pub fn estimate_statements_many(
    net: &ScaledNetwork,
    reqs: &[StatementRequest],
    plan: &Replicated,
) -> Result<Vec<StatementEstimates>, BarError> {
    let mut integrands = Vec::new();
    let mut set = FunctionalSet::new();
    for req in reqs {
        check_request(net, req)?;
        let station = req.k - 1;
        let scale = net.scale_of(station);
        let s1 = QueueResidualMoment {
            station,
            scale,
            n: req.n,
            residual: None,
            name: format!("(r^{}Z_{})^{}", req.k, req.k, req.n),
        };
        let s3 = QueueResidualMoment {
            station,
            scale,
            n: req.n,
            residual: Some((req.m - req.n, psi_terms(net, req.m))),
            name: format!("(r^{}Z_{})^{} psi_{}", req.k, req.k, req.n, req.m - req.n),
        };
        set.register(Arc::new(s1.clone())).expect("closed form");
        set.register(Arc::new(s3.clone())).expect("closed form");
        integrands.push((s1, s3));
    }
    let stations = net.stations();
    let pooled = replicate(
        plan,
        |cfg| {
            let fresh = || KindBatchSums::new(2 * stations, cfg.batches);
            let mut obs = PalmStatementObserver {
                integrands: integrands.clone(),
                stations,
                num: reqs.iter().map(|_| (fresh(), fresh())).collect(),
            };
            let out = run(net, cfg, &set, &mut [&mut obs])?;
            Ok(StatementRun { out, num: obs.num })
        },
        |acc, other| {
            acc.out.merge(other.out);
            for ((a1, a3), (b1, b3)) in acc.num.iter_mut().zip(other.num) {
                a1.merge(b1);
                a3.merge(b3);
            }
        },
    )?;
    let conf = plan.run.confidence;
    let counts = &pooled.out.palm.batch_counts;
    let prov = Provenance::new(net, &plan.run, plan.replications, pooled.out.integrals.window());
    Ok(reqs
        .iter()
        .enumerate()
        .map(|(i, req)| {
            let kinds: Vec<usize> = psi_terms(net, req.m)
                .arrivals
                .iter()
                .map(|&j| EventKind::ExternalArrival(j).index(stations))
                .chain((0..stations).map(|j| EventKind::ServiceCompletion(j).index(stations)))
                .collect();
            let (n1, n3) = &pooled.num[i];
            StatementEstimates {
                request: *req,
                r: net.r(),
                s1: pooled.out.integrals.time_average(2 * i, conf),
                s2: summed_palm(n1, counts, &kinds, conf),
                s3: pooled.out.integrals.time_average(2 * i + 1, conf),
                s4: summed_palm(n3, counts, &kinds, conf),
                palm_kinds: kinds
                    .iter()
                    .map(|&k| EventKind::from_index(k, stations).label())
                    .collect(),
                provenance: prov.clone(),
            }
        })
        .collect())
}

pub fn estimate_statements(
    net: &ScaledNetwork,
    req: StatementRequest,
    plan: &Replicated,
) -> Result<StatementEstimates, BarError> {
    Ok(estimate_statements_many(net, &[req], plan)?
        .pop()
        .expect("one estimate"))
}

/// `R^p`, optionally restricted to idle or busy periods of the station.
#[derive(Debug, Clone, PartialEq)]
struct ResidualPower {
    station: usize,
    service: bool,
    p: f64,
    busy: Option<bool>,
    name: String,
}

impl Functional for ResidualPower {
    fn label(&self) -> String {
        self.name.clone()
    }

    fn rule(&self) -> SegmentRule {
        SegmentRule::ClosedForm
    }

    fn value(&self, x: &SimState) -> f64 {
        let j = self.station;
        if self.busy.is_some_and(|b| b != (x.z[j] > 0)) {
            return 0.0;
        }
        power(if self.service { x.rs[j] } else { x.re[j] }, self.p)
    }

    fn closed_form(&self, x: &SimState, dt: f64) -> f64 {
        let j = self.station;
        if self.busy.is_some_and(|b| b != (x.z[j] > 0)) {
            return 0.0;
        }
        if self.service {
            crate::sim::residual_power_integral(x.rs[j], self.p, dt, x.z[j] > 0)
        } else {
            crate::sim::residual_power_integral(x.re[j], self.p, dt, true)
        }
    }
}

/// Time averages of residual-time powers at one station.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualMomentEstimate {
    pub station: usize,
    /// `E[R_e^M]`; absent without external arrivals.
    pub arrival: Option<BatchSummary>,
    /// `E[R_s^M]`.
    pub service: BatchSummary,
    /// `E[R_s^M; Z = 0]`, the frozen part.
    pub service_idle: BatchSummary,
    /// `E[R_s^M; Z > 0]`.
    pub service_busy: BatchSummary,
}

pub fn residual_moments(
    net: &ScaledNetwork,
    m: f64,
    plan: &Replicated,
) -> Result<Vec<ResidualMomentEstimate>, BarError> {
    if !(m >= 1.0 && m.is_finite()) {
        return Err(BarError::MomentOrder(m));
    }
    let stations = net.stations();
    let mut set = FunctionalSet::new();
    let mut index = Vec::new();
    for j in 0..stations {
        let mut add = |service: bool, busy: Option<bool>, tag: &str| {
            let name = format!("R_{}{}^{}{}", if service { "s," } else { "e," }, j + 1, m, tag);
            set.register(Arc::new(ResidualPower {
                station: j,
                service,
                p: m,
                busy,
                name,
            }))
            .expect("closed form")
        };
        let arrival = (net.alpha()[j] > 0.0).then(|| add(false, None, ""));
        let service = add(true, None, "");
        let idle = add(true, Some(false), ";idle");
        let busy = add(true, Some(true), ";busy");
        index.push((arrival, service, idle, busy));
    }
    let out = replicate(plan, |cfg| Ok(run(net, cfg, &set, &mut [])?), |a, b| a.merge(b))?;
    let conf = plan.run.confidence;
    let avg = |i: usize| out.integrals.time_average(i, conf);
    Ok(index
        .into_iter()
        .enumerate()
        .map(|(station, (a, s, idle, busy))| ResidualMomentEstimate {
            station,
            arrival: a.map(avg),
            service: avg(s),
            service_idle: avg(idle),
            service_busy: avg(busy),
        })
        .collect())
}
