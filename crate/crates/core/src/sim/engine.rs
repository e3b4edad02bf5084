use rand::{Rng, SeedableRng};

use super::state::{EventKind, JumpRecord, SimState};
use crate::distribution::{Sampler, SimRng};
use crate::network::ScaledNetwork;

/// Indexed binary min-heap over a fixed set of event slots keyed by
/// `(clock, slot)`. Slot order is the tie rank: completions occupy
/// `0..J` and arrivals `J..2J`, so simultaneous completions fire before
/// arrivals and lower stations first.
#[derive(Debug, Clone)]
struct EventHeap {
    clock: Vec<f64>,
    heap: Vec<usize>,
    pos: Vec<usize>,
}

impl EventHeap {
    fn new(clock: Vec<f64>) -> Self {
        let n = clock.len();
        let mut h = Self {
            clock,
            heap: (0..n).collect(),
            pos: (0..n).collect(),
        };
        for i in (0..n / 2).rev() {
            h.sift_down(i);
        }
        h
    }

    fn less(&self, a: usize, b: usize) -> bool {
        let (ca, cb) = (self.clock[a], self.clock[b]);
        ca < cb || (ca == cb && a < b)
    }

    fn swap(&mut self, i: usize, j: usize) {
        self.heap.swap(i, j);
        self.pos[self.heap[i]] = i;
        self.pos[self.heap[j]] = j;
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.less(self.heap[i], self.heap[parent]) {
                self.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        let n = self.heap.len();
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut best = i;
            if l < n && self.less(self.heap[l], self.heap[best]) {
                best = l;
            }
            if r < n && self.less(self.heap[r], self.heap[best]) {
                best = r;
            }
            if best == i {
                break;
            }
            self.swap(i, best);
            i = best;
        }
    }

    fn set(&mut self, slot: usize, clock: f64) {
        self.clock[slot] = clock;
        let i = self.pos[slot];
        self.sift_up(i);
        self.sift_down(self.pos[slot]);
    }

    fn min(&self) -> (usize, f64) {
        let s = self.heap[0];
        (s, self.clock[s])
    }
}

/// Event-driven simulator of `X(t) = (Z, R_e, R_s)`.
///
/// Residuals are held as absolute clocks; only a busy station's service
/// clock runs, an idle station keeps its next job's residual in `frozen`.
#[derive(Debug, Clone)]
pub struct Engine {
    net: ScaledNetwork,
    rng: SimRng,
    t: f64,
    z: Vec<u64>,
    arrival_clock: Vec<f64>,
    service_clock: Vec<f64>,
    frozen: Vec<f64>,
    heap: EventHeap,
    arrival: Vec<Option<Sampler>>,
    service: Vec<Sampler>,
    cumulative: Vec<Vec<f64>>,
    record: JumpRecord,
    steps: u64,
}

impl Engine {
    /// Engine seeded from `(seed, stream)`; distinct streams are independent.
    pub fn new(net: &ScaledNetwork, seed: u64, stream: u64) -> Self {
        let mut rng = SimRng::seed_from_u64(seed);
        rng.set_stream(stream);
        let state = initial_state(net, &mut rng);
        Self::from_state(net, &state, rng)
    }

    /// Continues from an explicit state. Busy stations use `rs` as the
    /// remaining service of the job in progress.
    pub fn from_state(net: &ScaledNetwork, state: &SimState, rng: SimRng) -> Self {
        let j = net.stations();
        let spec = net.spec();
        let arrival: Vec<Option<Sampler>> = (0..j)
            .map(|i| spec.arrival_distribution(i).map(|d| d.sampler()))
            .collect();
        let service = (0..j).map(|i| spec.service_distribution(i).sampler()).collect();
        let cumulative = (0..j)
            .map(|i| {
                spec.routing()
                    .row(i)
                    .iter()
                    .scan(0.0, |acc, p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        let t = state.t;
        let arrival_clock: Vec<f64> = (0..j)
            .map(|i| {
                if spec.has_arrivals(i) {
                    t + state.re[i]
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let service_clock: Vec<f64> = (0..j)
            .map(|i| if state.z[i] > 0 { t + state.rs[i] } else { f64::INFINITY })
            .collect();
        let mut keys = service_clock.clone();
        keys.extend_from_slice(&arrival_clock);
        Self {
            net: net.clone(),
            rng,
            t,
            z: state.z.clone(),
            arrival_clock,
            service_clock,
            frozen: state.rs.clone(),
            heap: EventHeap::new(keys),
            arrival,
            service,
            cumulative,
            record: JumpRecord::empty(j),
            steps: 0,
        }
    }

    pub fn network(&self) -> &ScaledNetwork {
        &self.net
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn queue(&self) -> &[u64] {
        &self.z
    }

    pub fn next_event_time(&self) -> f64 {
        self.heap.min().1
    }

    pub fn state(&self) -> SimState {
        let mut s = SimState::empty(self.z.len());
        self.write_state(&mut s);
        s
    }

    pub fn write_state(&self, out: &mut SimState) {
        out.t = self.t;
        out.z.clone_from(&self.z);
        for j in 0..self.z.len() {
            out.re[j] = if self.arrival_clock[j].is_finite() {
                self.arrival_clock[j] - self.t
            } else {
                f64::INFINITY
            };
            out.rs[j] = if self.z[j] > 0 {
                self.service_clock[j] - self.t
            } else {
                self.frozen[j]
            };
        }
    }

    /// Fires the next event and returns its record. Tied events fire as
    /// separate consecutive jumps at the same clock.
    pub fn step(&mut self) -> &JumpRecord {
        let stations = self.z.len();
        let (slot, clock) = self.heap.min();
        assert!(clock.is_finite(), "no active event clock");
        self.t = clock;
        let mut pre = std::mem::replace(&mut self.record.pre, SimState::empty(0));
        self.write_state(&mut pre);
        self.record.pre = pre;
        self.record.clock = clock;
        if slot < stations {
            let j = slot;
            self.record.pre.rs[j] = 0.0;
            self.complete(j);
        } else {
            let j = slot - stations;
            self.record.pre.re[j] = 0.0;
            self.arrive(j);
        }
        self.steps += 1;
        &self.record
    }

    pub fn last_record(&self) -> &JumpRecord {
        &self.record
    }

    /// Owned variant of [`Engine::step`] returning the post-jump state.
    pub fn step_owned(&mut self) -> (SimState, JumpRecord) {
        self.step();
        (self.state(), self.record.clone())
    }

    fn start_service(&mut self, j: usize) {
        self.service_clock[j] = self.t + self.frozen[j];
        self.heap.set(j, self.service_clock[j]);
    }

    fn arrive(&mut self, j: usize) {
        let stations = self.z.len();
        let sampler = self.arrival[j].as_ref().expect("arrival clock without stream");
        let sampled = sampler.sample(&mut self.rng);
        let installed = sampled / self.net.alpha()[j];
        self.arrival_clock[j] = self.t + installed;
        self.heap.set(stations + j, self.arrival_clock[j]);
        self.z[j] += 1;
        if self.z[j] == 1 {
            self.start_service(j);
        }
        self.record.kind = EventKind::ExternalArrival(j);
        self.record.sampled = sampled;
        self.record.installed = installed;
        self.record.routed_to = None;
    }

    fn complete(&mut self, j: usize) {
        let sampled = self.service[j].sample(&mut self.rng);
        let installed = sampled / self.net.mu()[j];
        let u: f64 = self.rng.random();
        let routed_to = self.cumulative[j].iter().position(|&c| u < c);
        self.z[j] -= 1;
        self.frozen[j] = installed;
        if self.z[j] > 0 {
            self.start_service(j);
        } else {
            self.service_clock[j] = f64::INFINITY;
            self.heap.set(j, f64::INFINITY);
        }
        if let Some(k) = routed_to {
            self.z[k] += 1;
            if self.z[k] == 1 {
                self.start_service(k);
            }
        }
        self.record.kind = EventKind::ServiceCompletion(j);
        self.record.sampled = sampled;
        self.record.installed = installed;
        self.record.routed_to = routed_to;
    }
}

/// `Z = 0`, `R_e,j = T/alpha_j`, `R_s,j = T/mu_j`, drawn arrivals first in
/// station order, then services.
pub fn initial_state<R: Rng + ?Sized>(net: &ScaledNetwork, rng: &mut R) -> SimState {
    let j = net.stations();
    let spec = net.spec();
    let mut s = SimState::empty(j);
    for i in 0..j {
        if let Some(d) = spec.arrival_distribution(i) {
            s.re[i] = d.sample(rng) / net.alpha()[i];
        }
    }
    for i in 0..j {
        s.rs[i] = spec.service_distribution(i).sample(rng) / net.mu()[i];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::DistributionSpec;
    use crate::network::NetworkSpec;
    use std::sync::Arc;

    fn deterministic_single() -> ScaledNetwork {
        let spec = NetworkSpec::builder(&[1.0], &[vec![0.0]])
            .arrival(0, DistributionSpec::Deterministic)
            .service(0, DistributionSpec::Deterministic)
            .build()
            .unwrap();
        ScaledNetwork::new(Arc::new(spec), 0.1).unwrap()
    }

    #[test]
    fn heap_orders_by_clock_then_slot() {
        let mut h = EventHeap::new(vec![3.0, 1.0, 1.0, 2.0]);
        assert_eq!(h.min(), (1, 1.0));
        h.set(1, 5.0);
        assert_eq!(h.min(), (2, 1.0));
        h.set(2, f64::INFINITY);
        assert_eq!(h.min(), (3, 2.0));
        h.set(0, 0.5);
        assert_eq!(h.min(), (0, 0.5));
    }

    #[test]
    fn deterministic_initial_state() {
        let net = deterministic_single();
        let mut rng = SimRng::seed_from_u64(1);
        let s = initial_state(&net, &mut rng);
        assert_eq!(s.z, vec![0]);
        assert_eq!(s.re, vec![1.0]);
        assert_eq!(s.rs, vec![1.0 / 1.1]);
    }

    #[test]
    fn first_deterministic_event_is_arrival() {
        let net = deterministic_single();
        let mut e = Engine::new(&net, 7, 0);
        let rec = e.step().clone();
        assert_eq!(rec.kind, EventKind::ExternalArrival(0));
        assert_eq!(rec.clock, 1.0);
        assert_eq!(e.queue(), &[1]);
        // Residuals are read back from absolute clocks, so allow an ulp.
        let (post, now) = (rec.post(), e.state());
        assert_eq!(post.z, now.z);
        for (a, b) in post.re.iter().chain(&post.rs).zip(now.re.iter().chain(&now.rs)) {
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.abs());
        }
    }

    #[test]
    fn tandem_completion_routes_downstream() {
        let spec = NetworkSpec::builder(&[1.0, 0.0], &[vec![0.0, 1.0], vec![0.0, 0.0]])
            .build()
            .unwrap();
        let net = ScaledNetwork::new(Arc::new(spec), 0.5).unwrap();
        let state = SimState {
            t: 0.0,
            z: vec![1, 0],
            re: vec![10.0, f64::INFINITY],
            rs: vec![0.5, 0.25],
        };
        let mut e = Engine::from_state(&net, &state, SimRng::seed_from_u64(3));
        let rec = e.step().clone();
        assert_eq!(rec.kind, EventKind::ServiceCompletion(0));
        assert_eq!(rec.routed_to, Some(1));
        assert_eq!(e.queue(), &[0, 1]);
        assert_eq!(e.next_event_time(), 0.75);
    }

    #[test]
    fn ties_fire_completions_first() {
        let spec = NetworkSpec::builder(&[1.0], &[vec![0.0]])
            .arrival(0, DistributionSpec::Deterministic)
            .service(0, DistributionSpec::Deterministic)
            .build()
            .unwrap();
        let net = ScaledNetwork::new(Arc::new(spec), 0.5).unwrap();
        let state = SimState {
            t: 0.0,
            z: vec![1],
            re: vec![1.0],
            rs: vec![1.0],
        };
        let mut e = Engine::from_state(&net, &state, SimRng::seed_from_u64(3));
        assert_eq!(e.step().kind, EventKind::ServiceCompletion(0));
        assert_eq!(e.step().kind, EventKind::ExternalArrival(0));
        assert_eq!(e.time(), 1.0);
    }

    #[test]
    fn reproducible_paths() {
        let net = deterministic_single();
        let mut a = Engine::new(&net, 11, 2);
        let mut b = Engine::new(&net, 11, 2);
        for _ in 0..1000 {
            assert_eq!(a.step(), b.step());
        }
    }

    #[test]
    fn frozen_residual_while_idle() {
        let spec = NetworkSpec::builder(&[1.0], &[vec![0.0]]).build().unwrap();
        let net = ScaledNetwork::new(Arc::new(spec), 0.5).unwrap();
        let mut e = Engine::new(&net, 5, 0);
        let mut last_idle: Option<f64> = None;
        for _ in 0..2000 {
            let rec = e.step().clone();
            let post = e.state();
            if post.z[0] == 0 {
                last_idle = Some(post.rs[0]);
            } else if let (Some(v), EventKind::ExternalArrival(_)) = (last_idle, rec.kind) {
                if rec.pre.z[0] == 0 {
                    assert_eq!(rec.pre.rs[0], v);
                }
                last_idle = None;
            }
        }
    }
}
