use serde::Serialize;

/// Markov state `(Z, R_e, R_s)` at clock `t`.
///
/// `re[j]` is `+inf` for stations without external arrivals; such clocks never
/// fire and are never read by test functions. `rs[j]` is the residual of the
/// job in service, or of the next job while the station is idle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimState {
    pub t: f64,
    pub z: Vec<u64>,
    pub re: Vec<f64>,
    pub rs: Vec<f64>,
}

impl SimState {
    pub fn empty(stations: usize) -> Self {
        Self {
            t: 0.0,
            z: vec![0; stations],
            re: vec![f64::INFINITY; stations],
            rs: vec![0.0; stations],
        }
    }

    pub fn stations(&self) -> usize {
        self.z.len()
    }

    pub fn busy(&self, j: usize) -> bool {
        self.z[j] > 0
    }

    /// State `s` time units later assuming no event fires in between.
    pub fn advance_into(&self, s: f64, out: &mut SimState) {
        out.t = self.t + s;
        out.z.clone_from(&self.z);
        for j in 0..self.stations() {
            out.re[j] = (self.re[j] - s).max(0.0);
            out.rs[j] = if self.z[j] > 0 {
                (self.rs[j] - s).max(0.0)
            } else {
                self.rs[j]
            };
        }
    }

    pub fn copy_from(&mut self, other: &SimState) {
        self.t = other.t;
        self.z.clone_from(&other.z);
        self.re.clone_from(&other.re);
        self.rs.clone_from(&other.rs);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EventKind {
    ExternalArrival(usize),
    ServiceCompletion(usize),
}

impl EventKind {
    pub fn station(self) -> usize {
        match self {
            Self::ExternalArrival(j) | Self::ServiceCompletion(j) => j,
        }
    }

    /// Dense index: arrivals first, then completions.
    pub fn index(self, stations: usize) -> usize {
        match self {
            Self::ExternalArrival(j) => j,
            Self::ServiceCompletion(j) => stations + j,
        }
    }

    pub fn from_index(index: usize, stations: usize) -> Self {
        if index < stations {
            Self::ExternalArrival(index)
        } else {
            Self::ServiceCompletion(index - stations)
        }
    }

    pub fn label(self) -> String {
        match self {
            Self::ExternalArrival(j) => format!("arrival[{}]", j + 1),
            Self::ServiceCompletion(j) => format!("completion[{}]", j + 1),
        }
    }
}

/// One jump of the process together with everything needed to rebuild the
/// post-jump state from the pre-jump state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpRecord {
    pub kind: EventKind,
    pub clock: f64,
    /// State just before the jump; the firing residual is zero.
    pub pre: SimState,
    /// Fresh unitized variate `T_{e,j}` or `T_{s,j}`.
    pub sampled: f64,
    /// Residual installed by the jump: `T / alpha_j` or `T / mu_j`.
    pub installed: f64,
    /// Destination of a completed job; `None` means it left the network.
    pub routed_to: Option<usize>,
}

impl JumpRecord {
    pub fn empty(stations: usize) -> Self {
        Self {
            kind: EventKind::ExternalArrival(0),
            clock: 0.0,
            pre: SimState::empty(stations),
            sampled: 0.0,
            installed: 0.0,
            routed_to: None,
        }
    }

    /// `X_+ = X_- + Delta`: arrival adds `e_j` and installs `R_e,j`;
    /// completion adds `-e_j + Phi` and installs `R_s,j`.
    pub fn post_into(&self, out: &mut SimState) {
        out.copy_from(&self.pre);
        match self.kind {
            EventKind::ExternalArrival(j) => {
                out.z[j] += 1;
                out.re[j] = self.installed;
            }
            EventKind::ServiceCompletion(j) => {
                out.z[j] -= 1;
                if let Some(k) = self.routed_to {
                    out.z[k] += 1;
                }
                out.rs[j] = self.installed;
            }
        }
    }

    pub fn post(&self) -> SimState {
        let mut out = self.pre.clone();
        self.post_into(&mut out);
        out
    }
}
