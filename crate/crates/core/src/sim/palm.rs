use serde::Serialize;

use super::run::Observer;
use super::state::{EventKind, JumpRecord, SimState};
use crate::stats::Comoment;

/// Pre-jump coordinate used in independence diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Coordinate {
    Queue(usize),
    ArrivalResidual(usize),
    ServiceResidual(usize),
}

impl Coordinate {
    pub fn read(self, x: &SimState) -> f64 {
        match self {
            Self::Queue(j) => x.z[j] as f64,
            Self::ArrivalResidual(j) => x.re[j],
            Self::ServiceResidual(j) => x.rs[j],
        }
    }

    pub fn label(self) -> String {
        match self {
            Self::Queue(j) => format!("Z[{}]", j + 1),
            Self::ArrivalResidual(j) => format!("Re[{}]", j + 1),
            Self::ServiceResidual(j) => format!("Rs[{}]", j + 1),
        }
    }
}

/// Correlation between the variate installed at each jump and every
/// pre-jump coordinate, per event kind. Under the Palm representation the
/// fresh variate is independent of the pre-jump state.
#[derive(Debug, Clone)]
pub struct IndependenceObserver {
    stations: usize,
    coords: Vec<Coordinate>,
    /// `[kind][coordinate]`.
    moments: Vec<Vec<Comoment>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceCheck {
    pub kind: EventKind,
    pub coordinate: Coordinate,
    pub samples: u64,
    /// `None` when either series is constant.
    pub correlation: Option<f64>,
    pub z_score: Option<f64>,
}

impl IndependenceCheck {
    pub fn passes(&self, limit: f64) -> bool {
        self.z_score.is_none_or(|z| z.abs() <= limit)
    }
}

impl IndependenceObserver {
    pub fn new(stations: usize, has_arrivals: &[bool]) -> Self {
        let mut coords: Vec<Coordinate> = (0..stations).map(Coordinate::Queue).collect();
        coords.extend(
            (0..stations)
                .filter(|&j| has_arrivals[j])
                .map(Coordinate::ArrivalResidual),
        );
        coords.extend((0..stations).map(Coordinate::ServiceResidual));
        Self {
            stations,
            moments: vec![vec![Comoment::default(); coords.len()]; 2 * stations],
            coords,
        }
    }

    pub fn checks(&self) -> Vec<IndependenceCheck> {
        let mut out = Vec::new();
        for (k, row) in self.moments.iter().enumerate() {
            let kind = EventKind::from_index(k, self.stations);
            for (c, m) in self.coords.iter().zip(row) {
                if m.n == 0 {
                    continue;
                }
                out.push(IndependenceCheck {
                    kind,
                    coordinate: *c,
                    samples: m.n,
                    correlation: m.correlation(),
                    z_score: m.z_score(),
                });
            }
        }
        out
    }
}

impl Observer for IndependenceObserver {
    fn on_jump(&mut self, _batch: usize, rec: &JumpRecord, _post: &SimState) {
        let row = &mut self.moments[rec.kind.index(self.stations)];
        for (c, m) in self.coords.iter().zip(row.iter_mut()) {
            m.push(rec.sampled, c.read(&rec.pre));
        }
    }
}
