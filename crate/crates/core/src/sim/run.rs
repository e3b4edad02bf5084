use serde::Serialize;
use thiserror::Error;

use super::engine::Engine;
use super::functional::{FunctionalSet, Scratch};
use super::state::{EventKind, JumpRecord, SimState};
use crate::decimal::dec;
use crate::network::ScaledNetwork;
use crate::stats::{ratio_summary, BatchSummary};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub horizon: f64,
    pub warmup_fraction: f64,
    pub batches: usize,
    pub seed: u64,
    /// Independent random stream within the seed; replications use 0, 1, ...
    pub stream: u64,
    /// Keep every `thin`-th Palm record per event kind; 0 keeps none.
    pub thin: u64,
    pub confidence: f64,
}

impl RunConfig {
    pub fn new(horizon: f64, seed: u64) -> Self {
        Self {
            horizon,
            warmup_fraction: 0.2,
            batches: 32,
            seed,
            stream: 0,
            thin: 0,
            confidence: 0.95,
        }
    }

    pub fn with_stream(&self, stream: u64) -> Self {
        Self {
            stream,
            ..self.clone()
        }
    }

    pub fn warmup_time(&self) -> f64 {
        self.horizon * self.warmup_fraction
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(RunError::Horizon(self.horizon));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(RunError::Warmup(self.warmup_fraction));
        }
        if self.batches < 2 {
            return Err(RunError::Batches(self.batches));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(RunError::Confidence(self.confidence));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("horizon must be positive and finite, got {0}")]
    Horizon(f64),
    #[error("warmup fraction must lie in [0, 1), got {0}")]
    Warmup(f64),
    #[error("need at least two batches, got {0}")]
    Batches(usize),
    #[error("confidence must lie in (0, 1), got {0}")]
    Confidence(f64),
}

/// Callbacks for the measurement window. `batch` is the time batch that
/// contains the segment start or the event clock.
pub trait Observer {
    fn on_segment(&mut self, _batch: usize, _x: &SimState, _dt: f64) {}
    fn on_jump(&mut self, _batch: usize, _rec: &JumpRecord, _post: &SimState) {}
}

/// Events by kind over the measurement window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PalmSampleSet {
    pub stations: usize,
    /// Total measured time `T`.
    pub horizon: f64,
    /// `[kind][batch]` event counts, kinds indexed by [`EventKind::index`].
    pub batch_counts: Vec<Vec<u64>>,
    pub batch_windows: Vec<f64>,
    pub thin: u64,
    pub records: Vec<JumpRecord>,
}

impl PalmSampleSet {
    fn new(stations: usize, batches: usize, thin: u64) -> Self {
        Self {
            stations,
            horizon: 0.0,
            batch_counts: vec![vec![0; batches]; 2 * stations],
            batch_windows: vec![0.0; batches],
            thin,
            records: Vec::new(),
        }
    }

    pub fn count(&self, kind: EventKind) -> u64 {
        self.batch_counts[kind.index(self.stations)].iter().sum()
    }

    pub fn rate(&self, kind: EventKind) -> f64 {
        self.count(kind) as f64 / self.horizon
    }

    pub fn rate_summary(&self, kind: EventKind, confidence: f64) -> BatchSummary {
        let counts: Vec<f64> = self.batch_counts[kind.index(self.stations)]
            .iter()
            .map(|&c| c as f64)
            .collect();
        ratio_summary(&counts, &self.batch_windows, confidence)
    }

    pub fn records_of(&self, kind: EventKind) -> impl Iterator<Item = &JumpRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    /// Concatenates the batches of independent replications.
    pub fn merge(&mut self, other: PalmSampleSet) {
        assert_eq!(self.stations, other.stations);
        self.horizon += other.horizon;
        for (a, b) in self.batch_counts.iter_mut().zip(other.batch_counts) {
            a.extend(b);
        }
        self.batch_windows.extend(other.batch_windows);
        self.records.extend(other.records);
    }
}

/// Per-batch time integrals of the registered functionals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentIntegral {
    pub labels: Vec<String>,
    pub exact: Vec<bool>,
    /// `[functional][batch]`.
    pub batch_sums: Vec<Vec<f64>>,
    pub batch_windows: Vec<f64>,
}

impl SegmentIntegral {
    pub fn total(&self, i: usize) -> f64 {
        self.batch_sums[i].iter().sum()
    }

    pub fn window(&self) -> f64 {
        self.batch_windows.iter().sum()
    }

    pub fn time_average(&self, i: usize, confidence: f64) -> BatchSummary {
        ratio_summary(&self.batch_sums[i], &self.batch_windows, confidence)
    }

    pub fn merge(&mut self, other: SegmentIntegral) {
        assert_eq!(self.labels, other.labels);
        for (a, b) in self.batch_sums.iter_mut().zip(other.batch_sums) {
            a.extend(b);
        }
        self.batch_windows.extend(other.batch_windows);
    }
}

/// Provenance attached to every estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub spec_hash: String,
    pub r: String,
    pub seed: u64,
    pub replications: u64,
    pub horizon: String,
    pub warmup_fraction: String,
    pub warmup_time: String,
    pub window: String,
}

impl Provenance {
    pub fn new(net: &ScaledNetwork, cfg: &RunConfig, replications: u64, window: f64) -> Self {
        Self {
            spec_hash: net.spec().hash(),
            r: dec(net.r()),
            seed: cfg.seed,
            replications,
            horizon: dec(cfg.horizon),
            warmup_fraction: dec(cfg.warmup_fraction),
            warmup_time: dec(cfg.warmup_time()),
            window: dec(window),
        }
    }
}

/// Point estimate with a batch-means confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub label: String,
    pub estimate: f64,
    pub half_width: f64,
    pub std_error: f64,
    pub confidence: f64,
    pub batches: usize,
    pub exact_quadrature: bool,
    pub provenance: Provenance,
}

impl MomentReport {
    pub fn new(label: String, s: &BatchSummary, exact: bool, provenance: Provenance) -> Self {
        Self {
            label,
            estimate: s.mean,
            half_width: s.half_width,
            std_error: s.std_error,
            confidence: s.confidence,
            batches: s.batches,
            exact_quadrature: exact,
            provenance,
        }
    }

    pub fn summary(&self) -> BatchSummary {
        BatchSummary {
            mean: self.estimate,
            std_dev: self.std_error * (self.batches as f64).sqrt(),
            std_error: self.std_error,
            half_width: self.half_width,
            confidence: self.confidence,
            batches: self.batches,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "label": self.label,
            "estimate": dec(self.estimate),
            "half_width": dec(self.half_width),
            "std_error": dec(self.std_error),
            "confidence": dec(self.confidence),
            "batches": self.batches,
            "exact_quadrature": self.exact_quadrature,
            "provenance": self.provenance,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub palm: PalmSampleSet,
    pub integrals: SegmentIntegral,
    pub steps: u64,
    pub final_state: SimState,
}

impl RunOutput {
    pub fn reports(&self, net: &ScaledNetwork, cfg: &RunConfig, replications: u64) -> Vec<MomentReport> {
        let prov = Provenance::new(net, cfg, replications, self.integrals.window());
        (0..self.integrals.labels.len())
            .map(|i| {
                MomentReport::new(
                    self.integrals.labels[i].clone(),
                    &self.integrals.time_average(i, cfg.confidence),
                    self.integrals.exact[i],
                    prov.clone(),
                )
            })
            .collect()
    }

    pub fn merge(&mut self, other: RunOutput) {
        self.palm.merge(other.palm);
        self.integrals.merge(other.integrals);
        self.steps += other.steps;
    }
}

struct Batching {
    start: f64,
    edges: Vec<f64>,
}

impl Batching {
    fn new(cfg: &RunConfig) -> Self {
        let start = cfg.warmup_time();
        let len = (cfg.horizon - start) / cfg.batches as f64;
        let mut edges: Vec<f64> = (1..cfg.batches).map(|b| start + b as f64 * len).collect();
        edges.push(cfg.horizon);
        Self { start, edges }
    }

    /// Batch containing `t >= start`.
    fn batch_of(&self, t: f64) -> usize {
        self.edges.partition_point(|&e| e <= t).min(self.edges.len() - 1)
    }
}

/// Simulates one replication, integrating `functionals` over the
/// post-warmup window and feeding every measured segment and jump to
/// `observers`.
pub fn run(
    net: &ScaledNetwork,
    cfg: &RunConfig,
    functionals: &FunctionalSet,
    observers: &mut [&mut dyn Observer],
) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let stations = net.stations();
    let mut engine = Engine::new(net, cfg.seed, cfg.stream);
    let batching = Batching::new(cfg);
    let mut palm = PalmSampleSet::new(stations, cfg.batches, cfg.thin);
    let mut sums = vec![vec![0.0; cfg.batches]; functionals.len()];
    let mut windows = vec![0.0; cfg.batches];
    let mut seen = vec![0u64; 2 * stations];
    let mut scratch = Scratch::new(stations);
    let mut cur = engine.state();
    let mut piece = SimState::empty(stations);
    let mut acc = vec![0.0; functionals.len()];

    let mut measure = |x: &SimState, dt: f64, batch: usize, observers: &mut [&mut dyn Observer]| {
        windows[batch] += dt;
        acc.iter_mut().for_each(|a| *a = 0.0);
        functionals.integrate_segment(x, dt, &mut scratch, &mut acc);
        for (s, a) in sums.iter_mut().zip(&acc) {
            s[batch] += a;
        }
        for o in observers.iter_mut() {
            o.on_segment(batch, x, dt);
        }
    };

    loop {
        let t0 = cur.t;
        let next = engine.next_event_time();
        let stop = next.min(cfg.horizon);
        // Measured part of [t0, stop), split at batch edges.
        let mut a = t0.max(batching.start);
        while a < stop {
            let batch = batching.batch_of(a);
            let b = batching.edges[batch].min(stop);
            if a == t0 {
                measure(&cur, b - a, batch, observers);
            } else {
                cur.advance_into(a - t0, &mut piece);
                measure(&piece, b - a, batch, observers);
            }
            a = b;
        }
        if next > cfg.horizon {
            break;
        }
        engine.step();
        engine.write_state(&mut cur);
        let rec = engine.last_record();
        if rec.clock >= batching.start {
            let batch = batching.batch_of(rec.clock);
            let kind = rec.kind.index(stations);
            palm.batch_counts[kind][batch] += 1;
            seen[kind] += 1;
            if cfg.thin > 0 && (seen[kind] - 1) % cfg.thin == 0 {
                palm.records.push(rec.clone());
            }
            for o in observers.iter_mut() {
                o.on_jump(batch, rec, &cur);
            }
        }
    }
    palm.horizon = windows.iter().sum();
    palm.batch_windows.clone_from(&windows);
    let integrals = SegmentIntegral {
        labels: (0..functionals.len()).map(|i| functionals.label(i)).collect(),
        exact: (0..functionals.len()).map(|i| functionals.is_exact(i)).collect(),
        batch_sums: sums,
        batch_windows: windows,
    };
    let mut final_state = cur;
    engine.write_state(&mut final_state);
    Ok(RunOutput {
        palm,
        integrals,
        steps: engine.steps(),
        final_state,
    })
}

/// Runs `reps` replications on streams `0..reps` and pools their batches.
pub fn run_replicated(
    net: &ScaledNetwork,
    cfg: &RunConfig,
    reps: u64,
    functionals: &FunctionalSet,
) -> Result<RunOutput, RunError> {
    assert!(reps >= 1);
    let mut out = run(net, &cfg.with_stream(0), functionals, &mut [])?;
    for rep in 1..reps {
        out.merge(run(net, &cfg.with_stream(rep), functionals, &mut [])?);
    }
    Ok(out)
}
