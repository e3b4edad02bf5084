use std::sync::Arc;

use thiserror::Error;

use super::quadrature::{adaptive_simpson, GaussRule};
use super::state::SimState;

/// How a functional is integrated over an inter-event segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentRule {
    /// Piecewise polynomial of the given degree in elapsed time between the
    /// functional's breakpoints; integrated exactly by Gauss-Legendre.
    Polynomial(u32),
    /// The functional integrates itself exactly.
    ClosedForm,
    /// Smooth but not polynomial; only accepted through
    /// [`FunctionalSet::register_adaptive`].
    NonPolynomial,
}

/// A function of the state whose time integral the engine accumulates.
pub trait Functional: Send + Sync {
    fn label(&self) -> String;

    fn rule(&self) -> SegmentRule;

    fn value(&self, x: &SimState) -> f64;

    /// Offsets in `(0, dt)` where the integrand's polynomial piece changes.
    fn breakpoints(&self, _x: &SimState, _dt: f64, _out: &mut Vec<f64>) {}

    /// Exact `int_0^dt value(x advanced by s) ds`; required for
    /// [`SegmentRule::ClosedForm`].
    fn closed_form(&self, _x: &SimState, _dt: f64) -> f64 {
        unimplemented!("functional does not provide a closed-form segment integral")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistrationError {
    #[error("functional {0} is not piecewise polynomial along segments")]
    NonPolynomial(String),
}

struct Entry {
    f: Arc<dyn Functional>,
    rule: SegmentRule,
    gauss: Option<GaussRule>,
}

/// Registered functionals and their quadrature rules.
#[derive(Default)]
pub struct FunctionalSet {
    entries: Vec<Entry>,
}

/// Reusable buffers for segment integration.
#[derive(Debug, Clone)]
pub struct Scratch {
    state: SimState,
    breaks: Vec<f64>,
}

impl Scratch {
    pub fn new(stations: usize) -> Self {
        Self {
            state: SimState::empty(stations),
            breaks: Vec::new(),
        }
    }
}

pub const ADAPTIVE_TOLERANCE: f64 = 1e-10;

impl FunctionalSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn register(&mut self, f: Arc<dyn Functional>) -> Result<usize, RegistrationError> {
        let rule = f.rule();
        if rule == SegmentRule::NonPolynomial {
            return Err(RegistrationError::NonPolynomial(f.label()));
        }
        Ok(self.push(f, rule))
    }

    /// Accepts any functional; non-polynomial ones use adaptive quadrature
    /// and are reported as non-exact.
    pub fn register_adaptive(&mut self, f: Arc<dyn Functional>) -> usize {
        let rule = f.rule();
        self.push(f, rule)
    }

    fn push(&mut self, f: Arc<dyn Functional>, rule: SegmentRule) -> usize {
        let gauss = match rule {
            SegmentRule::Polynomial(d) => Some(GaussRule::for_degree(d)),
            _ => None,
        };
        self.entries.push(Entry { f, rule, gauss });
        self.entries.len() - 1
    }

    pub fn label(&self, i: usize) -> String {
        self.entries[i].f.label()
    }

    pub fn is_exact(&self, i: usize) -> bool {
        self.entries[i].rule != SegmentRule::NonPolynomial
    }

    pub fn functional(&self, i: usize) -> &Arc<dyn Functional> {
        &self.entries[i].f
    }

    /// Adds `int_0^dt f(x(s)) ds` for every functional to `out`.
    pub fn integrate_segment(&self, x: &SimState, dt: f64, scratch: &mut Scratch, out: &mut [f64]) {
        if dt <= 0.0 {
            return;
        }
        for (entry, acc) in self.entries.iter().zip(out.iter_mut()) {
            *acc += integrate_one(entry, x, dt, scratch);
        }
    }
}

fn integrate_one(entry: &Entry, x: &SimState, dt: f64, scratch: &mut Scratch) -> f64 {
    let f = &entry.f;
    if entry.rule == SegmentRule::ClosedForm {
        return f.closed_form(x, dt);
    }
    scratch.breaks.clear();
    f.breakpoints(x, dt, &mut scratch.breaks);
    scratch.breaks.retain(|&b| b > 0.0 && b < dt);
    scratch.breaks.sort_by(f64::total_cmp);
    scratch.breaks.dedup();
    let mut total = 0.0;
    let mut a = 0.0;
    let cuts = std::mem::take(&mut scratch.breaks);
    for b in cuts.iter().copied().chain(std::iter::once(dt)) {
        total += match &entry.gauss {
            Some(rule) => {
                let mut sum = 0.0;
                for (s, w) in rule.points(a, b) {
                    x.advance_into(s, &mut scratch.state);
                    sum += w * f.value(&scratch.state);
                }
                sum
            }
            None => {
                let state = &mut scratch.state;
                adaptive_simpson(a, b, ADAPTIVE_TOLERANCE, |s| {
                    x.advance_into(s, state);
                    f.value(state)
                })
            }
        };
        a = b;
    }
    scratch.breaks = cuts;
    total
}

/// The constant one; its integral is the window length.
#[derive(Debug, Clone, Copy)]
pub struct Unit;

impl Functional for Unit {
    fn label(&self) -> String {
        "1".into()
    }

    fn rule(&self) -> SegmentRule {
        SegmentRule::Polynomial(0)
    }

    fn value(&self, _x: &SimState) -> f64 {
        1.0
    }
}

/// `x^p` with `0^0 = 1`, using integer powers when `p` is integral.
pub fn power(x: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else if p.fract() == 0.0 && p.abs() <= 64.0 {
        x.powi(p as i32)
    } else if x == 0.0 {
        0.0
    } else {
        x.powf(p)
    }
}

/// `int_0^dt (x - s)^p ds` when the coordinate runs, `x^p dt` when frozen.
pub fn residual_power_integral(x: f64, p: f64, dt: f64, running: bool) -> f64 {
    if !running {
        return power(x, p) * dt;
    }
    let end = (x - dt).max(0.0);
    (power(x, p + 1.0) - power(end, p + 1.0)) / (p + 1.0)
}

/// Residual coordinates entering a residual-power sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTerms {
    pub arrivals: Vec<usize>,
    pub services: Vec<usize>,
}

impl ResidualTerms {
    pub fn sum_power(&self, x: &SimState, p: f64) -> f64 {
        self.arrivals.iter().map(|&j| power(x.re[j], p)).sum::<f64>()
            + self.services.iter().map(|&j| power(x.rs[j], p)).sum::<f64>()
    }

    pub fn integral(&self, x: &SimState, p: f64, dt: f64) -> f64 {
        self.arrivals
            .iter()
            .map(|&j| residual_power_integral(x.re[j], p, dt, true))
            .sum::<f64>()
            + self
                .services
                .iter()
                .map(|&j| residual_power_integral(x.rs[j], p, dt, x.z[j] > 0))
                .sum::<f64>()
    }

    pub fn count(&self) -> usize {
        self.arrivals.len() + self.services.len()
    }
}

/// `(scale * z_k)^n * (sum over terms of R^p)`, or just the queue factor
/// when `residual` is `None`. Integrated in closed form for any real powers.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueResidualMoment {
    pub station: usize,
    pub scale: f64,
    pub n: f64,
    pub residual: Option<(f64, ResidualTerms)>,
    pub name: String,
}

impl QueueResidualMoment {
    fn queue_factor(&self, x: &SimState) -> f64 {
        power(self.scale * x.z[self.station] as f64, self.n)
    }
}

impl Functional for QueueResidualMoment {
    fn label(&self) -> String {
        self.name.clone()
    }

    fn rule(&self) -> SegmentRule {
        if self.residual.is_none() {
            SegmentRule::Polynomial(0)
        } else {
            SegmentRule::ClosedForm
        }
    }

    fn value(&self, x: &SimState) -> f64 {
        let q = self.queue_factor(x);
        match &self.residual {
            None => q,
            Some((p, terms)) => q * terms.sum_power(x, *p),
        }
    }

    fn closed_form(&self, x: &SimState, dt: f64) -> f64 {
        let q = self.queue_factor(x);
        match &self.residual {
            None => q * dt,
            Some((p, terms)) => {
                if q == 0.0 {
                    0.0
                } else {
                    q * terms.integral(x, *p, dt)
                }
            }
        }
    }
}
