use std::sync::Arc;

use crate::analysis::HeavyTrafficProfile;
use crate::network::ScaledNetwork;

use super::TestFunctionError;

/// Coefficients shared by every test function built for one scaled network
/// and moment order.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionContext {
    net: ScaledNetwork,
    moment_order: f64,
    covered: usize,
    arrival_terms: Vec<usize>,
    arrival_stations: Vec<usize>,
    u: Vec<Vec<f64>>,
    h_arrival: Vec<Vec<f64>>,
    h_service: Vec<Vec<f64>>,
    atoms: Vec<f64>,
    default_kappa: f64,
}

/// Quantile used for the default residual truncation level.
pub const DEFAULT_KAPPA_QUANTILE: f64 = 0.999;

impl FunctionContext {
    pub fn new(net: ScaledNetwork) -> Result<Arc<Self>, TestFunctionError> {
        let m = net.spec().moment_order();
        Self::with_moment_order(net, m)
    }

    /// Context for a moment order other than the network's `M`, as used by the
    /// real-exponent statements.
    pub fn with_moment_order(net: ScaledNetwork, m: f64) -> Result<Arc<Self>, TestFunctionError> {
        if !(m >= 0.0 && m.is_finite()) {
            return Err(TestFunctionError::MomentOrder(m));
        }
        let j = net.stations();
        let alpha = net.alpha().to_vec();
        let mu = net.mu().to_vec();
        let profile = HeavyTrafficProfile::new(&alpha, &mu, net.spec().routing())
            .map_err(|_| TestFunctionError::Singular)?;
        let covered = (m.floor() as usize).min(j);
        let arrival_stations: Vec<usize> = (0..j).filter(|&s| alpha[s] > 0.0).collect();
        let arrival_terms = arrival_stations
            .iter()
            .copied()
            .filter(|&s| s < covered)
            .collect();
        let h_arrival = profile.h.iter().map(|h| h.arrival.clone()).collect();
        let h_service = profile
            .h
            .iter()
            .enumerate()
            .map(|(k, h)| (0..j).map(|s| h.service(s, k)).collect())
            .collect();

        let mut atoms = Vec::new();
        let mut kappa = 0.0f64;
        let spec = net.spec();
        for &s in &arrival_stations {
            let d = spec.arrival_distribution(s).expect("arrival law for alpha > 0");
            kappa = kappa.max(d.quantile(DEFAULT_KAPPA_QUANTILE) / alpha[s]);
            if let Some(a) = d.atom() {
                atoms.push(a / alpha[s]);
            }
        }
        for (s, &rate) in mu.iter().enumerate() {
            let d = spec.service_distribution(s);
            kappa = kappa.max(d.quantile(DEFAULT_KAPPA_QUANTILE) / rate);
            if let Some(a) = d.atom() {
                atoms.push(a / rate);
            }
        }
        let default_kappa = nudge_off(kappa, &atoms);
        Ok(Arc::new(Self {
            moment_order: m,
            covered,
            arrival_terms,
            arrival_stations,
            u: profile.u,
            h_arrival,
            h_service,
            atoms,
            default_kappa,
            net,
        }))
    }

    pub fn network(&self) -> &ScaledNetwork {
        &self.net
    }

    pub fn stations(&self) -> usize {
        self.net.stations()
    }

    pub fn r(&self) -> f64 {
        self.net.r()
    }

    pub fn moment_order(&self) -> f64 {
        self.moment_order
    }

    /// `floor(M) min J`, the largest admissible `k` for the `f_{k,n}` family.
    pub fn covered(&self) -> usize {
        self.covered
    }

    /// Stations `j < floor(M) min J` with `alpha_j > 0`, whose interarrival
    /// residuals enter `psi`.
    pub fn arrival_terms(&self) -> &[usize] {
        &self.arrival_terms
    }

    pub fn arrival_stations(&self) -> &[usize] {
        &self.arrival_stations
    }

    /// Number of residual coordinates in `psi`.
    pub fn psi_terms(&self) -> usize {
        self.arrival_terms.len() + self.stations()
    }

    /// `u^(k)` for 1-based `k`.
    pub fn u(&self, k: usize) -> &[f64] {
        &self.u[k - 1]
    }

    pub fn h_arrival(&self, k: usize) -> &[f64] {
        &self.h_arrival[k - 1]
    }

    pub fn h_service(&self, k: usize) -> &[f64] {
        &self.h_service[k - 1]
    }

    /// Residual values carried with positive probability (installed values of
    /// deterministic clocks).
    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn default_kappa(&self) -> f64 {
        self.default_kappa
    }

    /// Default soft-truncation level for queue terms of station `k`:
    /// `max(kappa, r^-k)`, the scale on which `r^k Z_k` is order one.
    pub fn default_queue_kappa(&self, k: usize, kappa: f64) -> f64 {
        kappa.max(self.r().powi(-(k as i32)))
    }

    pub fn lies_on_atom(&self, kappa: f64) -> bool {
        self.atoms.iter().any(|&a| on_atom(kappa, a))
    }
}

fn on_atom(kappa: f64, atom: f64) -> bool {
    (kappa - atom).abs() <= 4.0 * f64::EPSILON * atom.abs()
}

/// Moves `kappa` upward by machine-epsilon multiples until it is clear of
/// every atom.
pub fn nudge_off(mut kappa: f64, atoms: &[f64]) -> f64 {
    while atoms.iter().any(|&a| on_atom(kappa, a)) {
        kappa += 8.0 * f64::EPSILON * kappa;
    }
    kappa
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::DistributionSpec;
    use crate::network::NetworkSpec;

    fn tandem(r: f64) -> Arc<FunctionContext> {
        let spec = NetworkSpec::builder(&[1.0, 0.0], &[vec![0.0, 1.0], vec![0.0, 0.0]])
            .arrival(0, DistributionSpec::Deterministic)
            .all_services(DistributionSpec::Exponential)
            .moment_order(2.0)
            .build()
            .unwrap();
        FunctionContext::new(ScaledNetwork::new(Arc::new(spec), r).unwrap()).unwrap()
    }

    #[test]
    fn tandem_coefficients() {
        let c = tandem(0.1);
        assert_eq!(c.covered(), 2);
        assert_eq!(c.arrival_terms(), &[0]);
        assert_eq!(c.psi_terms(), 3);
        assert_eq!(c.u(2), &[1.0, 1.0]);
        assert_eq!(c.h_arrival(1), &[-1.0, 0.0]);
        assert!((c.h_service(1)[0] - 1.1).abs() < 1e-15);
        assert_eq!(c.h_service(1)[1], 0.0);
    }

    #[test]
    fn default_kappa_clears_deterministic_atom() {
        let c = tandem(0.1);
        assert_eq!(c.atoms(), &[1.0]);
        assert!(c.default_kappa() > 1.0);
        assert!(!c.lies_on_atom(c.default_kappa()));
        // Exponential services at rate 1.01 dominate the quantile.
        let want = -(1.0f64 - DEFAULT_KAPPA_QUANTILE).ln() / 1.01;
        assert!((c.default_kappa() - want).abs() < 1e-9);
    }

    #[test]
    fn nudge_is_minimal() {
        let k = nudge_off(2.0, &[2.0]);
        assert!(k > 2.0 && k < 2.0 * (1.0 + 1e-14));
        assert_eq!(nudge_off(3.0, &[2.0]), 3.0);
    }
}
