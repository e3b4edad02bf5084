//! Network descriptions, the JSON spec file, and multi-scale scaling.
//!
//! Station indices are 0-based throughout the Rust API. Reports and the CLI
//! number stations from 1, matching how the model is usually written.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{self, TrafficSolution};
use crate::decimal::Decimal;
use crate::distribution::{DistributionError, DistributionSpec};
use crate::linalg::{DenseMatrix, Lu};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("network must have at least one station")]
    Empty,
    #[error("{what} has length {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("routing entry P[{row}][{col}] = {value} is negative")]
    NegativeRouting { row: usize, col: usize, value: f64 },
    #[error("routing row {row} sums to {sum} > 1")]
    RowSum { row: usize, sum: f64 },
    #[error("I - P is singular: the network is not open")]
    Closed,
    #[error("external arrival rate {value} at station {station} is negative")]
    NegativeRate { station: usize, value: f64 },
    #[error("every external arrival rate is zero")]
    NoArrivals,
    #[error("station {station} receives no work (lambda = {lambda})")]
    Starved { station: usize, lambda: f64 },
    #[error("station {station} has alpha > 0 but no arrival distribution")]
    MissingArrival { station: usize },
    #[error("station {station} has alpha = 0 but carries an arrival distribution")]
    UnexpectedArrival { station: usize },
    #[error("station {station}: {source}")]
    Distribution {
        station: usize,
        source: DistributionError,
    },
    #[error("moment order M = {0} must be at least 1")]
    MomentOrder(f64),
    #[error("moment condition fails: E[{stream}^{order}] is not finite")]
    MomentCondition { stream: String, order: f64 },
    #[error("scale r = {0} must lie in (0, 1)")]
    Scale(f64),
    #[error("station {station} is unstable at r = {r} (rho = {rho})")]
    Unstable { station: usize, r: f64, rho: f64 },
    #[error("malformed spec file: {0}")]
    Json(String),
}

/// Substochastic routing matrix of an open network.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingMatrix<T> {
    entries: DenseMatrix<T>,
}

impl<T: Scalar> RoutingMatrix<T> {
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self, SpecError> {
        let n = rows.len();
        if n == 0 {
            return Err(SpecError::Empty);
        }
        for row in &rows {
            if row.len() != n {
                return Err(SpecError::Dimension {
                    what: "routing row",
                    got: row.len(),
                    expected: n,
                });
            }
        }
        for (i, row) in rows.iter().enumerate() {
            let mut sum = T::zero();
            for (j, v) in row.iter().enumerate() {
                if *v < T::zero() {
                    return Err(SpecError::NegativeRouting {
                        row: i,
                        col: j,
                        value: v.to_f64(),
                    });
                }
                sum = sum + v.clone();
            }
            let excess = sum.clone() - T::one();
            if excess > T::zero() && !excess.is_negligible() {
                return Err(SpecError::RowSum {
                    row: i,
                    sum: sum.to_f64(),
                });
            }
        }
        let entries = DenseMatrix::from_rows(&rows);
        let p = Self { entries };
        Lu::factor(&p.i_minus_p()).map_err(|_| SpecError::Closed)?;
        Ok(p)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            entries: DenseMatrix::zeros(n, n),
        }
    }

    pub fn stations(&self) -> usize {
        self.entries.rows()
    }

    pub fn get(&self, from: usize, to: usize) -> &T {
        &self.entries[(from, to)]
    }

    pub fn row(&self, from: usize) -> &[T] {
        self.entries.row(from)
    }

    /// `P_{j0}`: probability that a job finishing at `from` leaves the network.
    pub fn exit_probability(&self, from: usize) -> T {
        self.row(from)
            .iter()
            .fold(T::one(), |acc, v| acc - v.clone())
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.entries
    }

    pub fn i_minus_p(&self) -> DenseMatrix<T> {
        let n = self.stations();
        let mut m = DenseMatrix::<T>::identity(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = m[(i, j)].clone() - self.entries[(i, j)].clone();
            }
        }
        m
    }
}

/// On-disk network description. Decimals are strings so files stay exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    #[serde(rename = "J")]
    pub stations: usize,
    pub alpha: Vec<Decimal>,
    #[serde(rename = "P")]
    pub routing: Vec<Vec<Decimal>>,
    pub arrival: Vec<Option<DistributionSpec>>,
    pub service: Vec<DistributionSpec>,
    #[serde(rename = "M")]
    pub moment_order: Decimal,
}

/// Validated generalized Jackson network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    file: NetworkFile,
    alpha: Vec<f64>,
    routing: RoutingMatrix<f64>,
    traffic: TrafficSolution<f64>,
}

impl NetworkSpec {
    pub fn new(file: NetworkFile) -> Result<Self, SpecError> {
        let n = file.stations;
        if n == 0 {
            return Err(SpecError::Empty);
        }
        let check = |what, got| {
            if got == n {
                Ok(())
            } else {
                Err(SpecError::Dimension {
                    what,
                    got,
                    expected: n,
                })
            }
        };
        check("alpha", file.alpha.len())?;
        check("P", file.routing.len())?;
        check("arrival", file.arrival.len())?;
        check("service", file.service.len())?;

        let m = file.moment_order.value();
        if !(m >= 1.0) {
            return Err(SpecError::MomentOrder(m));
        }
        let alpha: Vec<f64> = file.alpha.iter().map(Decimal::value).collect();
        for (station, &a) in alpha.iter().enumerate() {
            if a < 0.0 {
                return Err(SpecError::NegativeRate { station, value: a });
            }
        }
        if alpha.iter().all(|&a| a == 0.0) {
            return Err(SpecError::NoArrivals);
        }
        for (station, (a, dist)) in alpha.iter().zip(&file.arrival).enumerate() {
            match (*a > 0.0, dist) {
                (true, None) => return Err(SpecError::MissingArrival { station }),
                (false, Some(_)) => return Err(SpecError::UnexpectedArrival { station }),
                (true, Some(d)) => d
                    .validate()
                    .map_err(|source| SpecError::Distribution { station, source })?,
                (false, None) => {}
            }
        }
        for (station, d) in file.service.iter().enumerate() {
            d.validate()
                .map_err(|source| SpecError::Distribution { station, source })?;
        }
        let routing = RoutingMatrix::new(
            file.routing
                .iter()
                .map(|row| row.iter().map(Decimal::value).collect())
                .collect(),
        )?;
        let traffic = analysis::solve_traffic(&alpha, &routing).map_err(|_| SpecError::Closed)?;
        for (station, &lambda) in traffic.lambda().iter().enumerate() {
            if !(lambda > 0.0) || lambda.is_negligible() {
                return Err(SpecError::Starved { station, lambda });
            }
        }
        let spec = Self {
            file,
            alpha,
            routing,
            traffic,
        };
        spec.check_moment_condition()?;
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let file: NetworkFile =
            serde_json::from_str(text).map_err(|e| SpecError::Json(e.to_string()))?;
        Self::new(file)
    }

    pub fn builder(alpha: &[f64], routing: &[Vec<f64>]) -> NetworkBuilder {
        NetworkBuilder::new(alpha, routing)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("spec serializes")
    }

    pub fn file(&self) -> &NetworkFile {
        &self.file
    }

    /// Truncated SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&self.file).expect("spec serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn stations(&self) -> usize {
        self.file.stations
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn has_arrivals(&self, station: usize) -> bool {
        self.alpha[station] > 0.0
    }

    pub fn routing(&self) -> &RoutingMatrix<f64> {
        &self.routing
    }

    pub fn lambda(&self) -> &[f64] {
        self.traffic.lambda()
    }

    pub fn traffic(&self) -> &TrafficSolution<f64> {
        &self.traffic
    }

    pub fn moment_order(&self) -> f64 {
        self.file.moment_order.value()
    }

    /// `floor(M) ∧ J`: how many leading stations the moment bounds cover.
    pub fn covered_stations(&self) -> usize {
        (self.moment_order().floor() as usize).min(self.stations())
    }

    pub fn arrival_distribution(&self, station: usize) -> Option<&DistributionSpec> {
        self.file.arrival[station].as_ref()
    }

    pub fn service_distribution(&self, station: usize) -> &DistributionSpec {
        &self.file.service[station]
    }

    pub fn alpha_exact<T: Scalar>(&self) -> Vec<T> {
        self.file.alpha.iter().map(Decimal::to_scalar).collect()
    }

    pub fn routing_exact<T: Scalar>(&self) -> RoutingMatrix<T> {
        RoutingMatrix::new(
            self.file
                .routing
                .iter()
                .map(|row| row.iter().map(Decimal::to_scalar).collect())
                .collect(),
        )
        .expect("validated in f64; exact parse of the same text stays valid")
    }

    fn check_moment_condition(&self) -> Result<(), SpecError> {
        let order = self.moment_order() + 1.0;
        for j in 0..self.covered_stations() {
            if let Some(d) = self.arrival_distribution(j) {
                if !d.raw_moment(order).is_finite() {
                    return Err(SpecError::MomentCondition {
                        stream: format!("T_e{}", j + 1),
                        order,
                    });
                }
            }
        }
        for j in 0..self.stations() {
            if !self.service_distribution(j).raw_moment(order).is_finite() {
                return Err(SpecError::MomentCondition {
                    stream: format!("T_s{}", j + 1),
                    order,
                });
            }
        }
        Ok(())
    }
}

/// Programmatic construction of a [`NetworkSpec`].
#[derive(Debug, Clone)]
pub struct NetworkBuilder {
    alpha: Vec<f64>,
    routing: Vec<Vec<f64>>,
    arrival: Vec<Option<DistributionSpec>>,
    service: Vec<DistributionSpec>,
    moment_order: f64,
}

impl NetworkBuilder {
    fn new(alpha: &[f64], routing: &[Vec<f64>]) -> Self {
        let arrival = alpha
            .iter()
            .map(|&a| (a > 0.0).then_some(DistributionSpec::Exponential))
            .collect();
        Self {
            alpha: alpha.to_vec(),
            routing: routing.to_vec(),
            arrival,
            service: vec![DistributionSpec::Exponential; alpha.len()],
            moment_order: 2.0,
        }
    }

    pub fn arrival(mut self, station: usize, dist: DistributionSpec) -> Self {
        self.arrival[station] = Some(dist);
        self
    }

    pub fn service(mut self, station: usize, dist: DistributionSpec) -> Self {
        self.service[station] = dist;
        self
    }

    pub fn all_services(mut self, dist: DistributionSpec) -> Self {
        self.service = vec![dist; self.alpha.len()];
        self
    }

    pub fn moment_order(mut self, m: f64) -> Self {
        self.moment_order = m;
        self
    }

    pub fn build(self) -> Result<NetworkSpec, SpecError> {
        NetworkSpec::new(NetworkFile {
            stations: self.alpha.len(),
            alpha: self.alpha.iter().copied().map(Decimal::from).collect(),
            routing: self
                .routing
                .iter()
                .map(|row| row.iter().copied().map(Decimal::from).collect())
                .collect(),
            arrival: self.arrival,
            service: self.service,
            moment_order: self.moment_order.into(),
        })
    }
}

/// A network bound to a scale `r`, with `mu_j = lambda_j + r^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledNetwork {
    spec: Arc<NetworkSpec>,
    r: f64,
    mu: Vec<f64>,
    rho: Vec<f64>,
}

impl ScaledNetwork {
    pub fn new(spec: Arc<NetworkSpec>, r: f64) -> Result<Self, SpecError> {
        if !(r > 0.0 && r < 1.0) {
            return Err(SpecError::Scale(r));
        }
        let mu = multiscale_service_rates(spec.lambda(), r);
        let rho: Vec<f64> = spec
            .lambda()
            .iter()
            .zip(&mu)
            .map(|(l, m)| l / m)
            .collect();
        for (station, &p) in rho.iter().enumerate() {
            if !(p > 0.0 && p < 1.0) {
                return Err(SpecError::Unstable { station, r, rho: p });
            }
        }
        Ok(Self { spec, r, mu, rho })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn spec_arc(&self) -> &Arc<NetworkSpec> {
        &self.spec
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn stations(&self) -> usize {
        self.spec.stations()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn lambda(&self) -> &[f64] {
        self.spec.lambda()
    }

    pub fn alpha(&self) -> &[f64] {
        self.spec.alpha()
    }

    /// `r^(station+1)`, the heavy-traffic scale of a station.
    pub fn scale_of(&self, station: usize) -> f64 {
        self.r.powi(station as i32 + 1)
    }
}

/// Convenience wrapper matching the common call shape.
pub fn make_scaled(spec: &Arc<NetworkSpec>, r: f64) -> Result<ScaledNetwork, SpecError> {
    ScaledNetwork::new(Arc::clone(spec), r)
}

/// `mu_j = lambda_j + r^j` for 1-based station number `j`.
pub fn multiscale_service_rates<T: Scalar>(lambda: &[T], r: T) -> Vec<T> {
    lambda
        .iter()
        .enumerate()
        .map(|(i, l)| l.clone() + r.powi(i as u32 + 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkSpec;

    fn tandem() -> Arc<NetworkSpec> {
        Arc::new(
            NetworkSpec::builder(&[1.0, 0.0], &[vec![0.0, 1.0], vec![0.0, 0.0]])
                .build()
                .unwrap(),
        )
    }

    #[test]
    fn scaled_rates_by_substitution() {
        let spec = Arc::new(
            NetworkSpec::builder(&[1.0, 1.0], &[vec![0.0; 2], vec![0.0; 2]])
                .build()
                .unwrap(),
        );
        let net = make_scaled(&spec, 0.1).unwrap();
        assert!((net.mu()[0] - 1.1).abs() < 1e-15);
        assert!((net.mu()[1] - 1.01).abs() < 1e-15);
        let net = make_scaled(&spec, 0.999).unwrap();
        assert!((net.mu()[0] - 1.999).abs() < 1e-15);
        assert!((net.mu()[1] - 1.998001).abs() < 1e-15);
    }

    #[test]
    fn tandem_intensities() {
        let net = make_scaled(&tandem(), 0.2).unwrap();
        assert!((net.rho()[0] - 1.0 / 1.2).abs() < 1e-15);
        assert!((net.rho()[1] - 1.0 / 1.04).abs() < 1e-15);
    }

    #[test]
    fn margin_equals_power_of_r() {
        let spec = tandem();
        for r in [0.01, 0.3, 0.9] {
            let net = make_scaled(&spec, r).unwrap();
            for j in 0..2 {
                let gap = net.mu()[j] - net.lambda()[j];
                assert!((gap - r.powi(j as i32 + 1)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scale_must_be_in_unit_interval() {
        for r in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(make_scaled(&tandem(), r).is_err());
        }
    }

    #[test]
    fn make_scaled_is_deterministic() {
        let spec = tandem();
        let a = make_scaled(&spec, 0.37).unwrap();
        let b = make_scaled(&spec, 0.37).unwrap();
        for (x, y) in a.mu().iter().zip(b.mu()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn rejects_closed_and_bad_rows() {
        let closed = NetworkSpec::builder(&[1.0, 0.0], &[vec![0.0, 1.0], vec![1.0, 0.0]]).build();
        assert_eq!(closed.unwrap_err(), SpecError::Closed);
        let over = NetworkSpec::builder(&[1.0, 0.0], &[vec![0.6, 0.6], vec![0.0, 0.0]]).build();
        assert!(matches!(over, Err(SpecError::RowSum { row: 0, .. })));
        let neg = NetworkSpec::builder(&[1.0], &[vec![-0.1]]).build();
        assert!(matches!(neg, Err(SpecError::NegativeRouting { .. })));
    }

    #[test]
    fn rejects_missing_work() {
        let none = NetworkSpec::builder(&[0.0, 0.0], &[vec![0.0; 2], vec![0.0; 2]]).build();
        assert_eq!(none.unwrap_err(), SpecError::NoArrivals);
        let starved = NetworkSpec::builder(&[1.0, 0.0], &[vec![0.0; 2], vec![0.0; 2]]).build();
        assert!(matches!(starved, Err(SpecError::Starved { station: 1, .. })));
    }

    #[test]
    fn arrival_distribution_must_match_alpha() {
        let mut file = tandem().file().clone();
        file.arrival[1] = Some(DistributionSpec::Exponential);
        assert_eq!(
            NetworkSpec::new(file.clone()).unwrap_err(),
            SpecError::UnexpectedArrival { station: 1 }
        );
        file.arrival = vec![None, None];
        assert_eq!(
            NetworkSpec::new(file).unwrap_err(),
            SpecError::MissingArrival { station: 0 }
        );
    }

    #[test]
    fn huge_moment_order_overflows_condition() {
        let spec = NetworkSpec::builder(&[1.0], &[vec![0.0]])
            .service(0, DistributionSpec::lognormal(3.0))
            .moment_order(40.0)
            .build();
        assert!(matches!(spec, Err(SpecError::MomentCondition { .. })));
    }

    #[test]
    fn spec_file_format() {
        let text = r#"{
            "J": 2,
            "alpha": ["1", "0"],
            "P": [["0", "1"], ["0", "0"]],
            "arrival": [{"family": "Exponential"}, null],
            "service": [{"family": "Erlang", "k": 2}, {"family": "LogNormal", "sigma": "0.5"}],
            "M": "2"
        }"#;
        let spec = NetworkSpec::from_json(text).unwrap();
        assert_eq!(spec.lambda(), &[1.0, 1.0]);
        let again = NetworkSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(again, spec);
        assert_eq!(again.hash(), spec.hash());
        assert_eq!(spec.covered_stations(), 2);
    }

    #[test]
    fn exit_probabilities() {
        let p = RoutingMatrix::new(vec![vec![0.25, 0.25], vec![0.0, 0.0]]).unwrap();
        assert!((p.exit_probability(0) - 0.5_f64).abs() < 1e-15);
        assert_eq!(p.exit_probability(1), 1.0);
    }
}
