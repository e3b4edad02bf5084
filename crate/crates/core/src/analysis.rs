//! Deterministic quantities derived from `(alpha, P)`: traffic rates, the
//! w-matrix of restricted hitting probabilities, the critical scale `r0`,
//! the `u` vectors and `h_k` coefficients, and the drift margins.
//!
//! Everything except `r0` (which takes real roots) is field arithmetic and is
//! generic over [`Scalar`], so the same code runs in `f64` or exactly in
//! rationals.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, DenseMatrix, SingularMatrix};
use crate::network::{multiscale_service_rates, NetworkSpec, RoutingMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("traffic equations are singular: {0}")]
    Singular(#[from] SingularMatrix),
    #[error("alpha has length {got}, routing has {expected} stations")]
    Dimension { got: usize, expected: usize },
}

/// Solution of `lambda_j = alpha_j + sum_l lambda_l P_lj`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSolution<T> {
    lambda: Vec<T>,
}

impl<T: Scalar> TrafficSolution<T> {
    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }

    /// `rho_j(r) = lambda_j / (lambda_j + r^j)`.
    pub fn rho(&self, r: T) -> Vec<T> {
        multiscale_service_rates(&self.lambda, r)
            .into_iter()
            .zip(&self.lambda)
            .map(|(mu, l)| l.clone() / mu)
            .collect()
    }

    /// Max over stations of `|lambda_j - alpha_j - sum_l lambda_l P_lj|`.
    pub fn residual(&self, alpha: &[T], p: &RoutingMatrix<T>) -> T {
        let n = p.stations();
        (0..n)
            .map(|j| {
                let inflow = (0..n).fold(alpha[j].clone(), |acc, l| {
                    acc + self.lambda[l].clone() * p.get(l, j).clone()
                });
                (self.lambda[j].clone() - inflow).abs()
            })
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }
}

/// `lambda = (I - P^T)^{-1} alpha`.
pub fn solve_traffic<T: Scalar>(
    alpha: &[T],
    p: &RoutingMatrix<T>,
) -> Result<TrafficSolution<T>, AnalysisError> {
    if alpha.len() != p.stations() {
        return Err(AnalysisError::Dimension {
            got: alpha.len(),
            expected: p.stations(),
        });
    }
    let system = p.i_minus_p().transpose();
    let lambda = linalg::solve(&system, alpha)?;
    Ok(TrafficSolution { lambda })
}

/// `w_jk`: probability that a job routed out of `j` reaches `k` before leaving
/// the network or visiting a station numbered above `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WMatrix<T> {
    w: DenseMatrix<T>,
}

impl<T: Scalar> WMatrix<T> {
    pub fn get(&self, j: usize, k: usize) -> &T {
        &self.w[(j, k)]
    }

    pub fn stations(&self) -> usize {
        self.w.rows()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.w.to_rows()
    }

    /// Max over `(j, k)` of `|w_jk - P_jk - sum_{l<k} P_jl w_lk|`.
    pub fn recursion_residual(&self, p: &RoutingMatrix<T>) -> T {
        let n = self.stations();
        let mut worst = T::zero();
        for j in 0..n {
            for k in 0..n {
                let rhs = (0..k).fold(p.get(j, k).clone(), |acc, l| {
                    acc + p.get(j, l).clone() * self.w[(l, k)].clone()
                });
                let d = (self.w[(j, k)].clone() - rhs).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }
}

/// Column-by-column solve: for column `k` the unknowns `w_{1..k-1,k}` satisfy
/// `(I - P_[<k,<k]) w = P_[<k,k]`; rows `j >= k` then follow from the recursion.
pub fn compute_w<T: Scalar>(p: &RoutingMatrix<T>) -> Result<WMatrix<T>, SingularMatrix> {
    let n = p.stations();
    let mut w = DenseMatrix::zeros(n, n);
    let system = p.i_minus_p();
    for k in 0..n {
        if k > 0 {
            let block = system.leading_block(k);
            let rhs: Vec<T> = (0..k).map(|j| p.get(j, k).clone()).collect();
            let upper = linalg::solve(&block, &rhs)?;
            for (j, v) in upper.into_iter().enumerate() {
                w[(j, k)] = v;
            }
        }
        for j in k..n {
            let v = (0..k).fold(p.get(j, k).clone(), |acc, l| {
                acc + p.get(j, l).clone() * w[(l, k)].clone()
            });
            w[(j, k)] = v;
        }
    }
    Ok(WMatrix { w })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HitEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub hits: u64,
    pub paths: u64,
}

/// Brute-force `w_jk` by following routing decisions from `j`.
pub fn monte_carlo_w<R: Rng + ?Sized>(
    p: &RoutingMatrix<f64>,
    j: usize,
    k: usize,
    paths: u64,
    rng: &mut R,
) -> HitEstimate {
    assert!(paths >= 1, "need at least one path");
    let n = p.stations();
    let cumulative: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            p.row(i)
                .iter()
                .scan(0.0, |acc, v| {
                    *acc += v;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let mut hits = 0u64;
    for _ in 0..paths {
        let mut at = j;
        loop {
            let u: f64 = rng.random();
            let next = cumulative[at].iter().position(|&c| u < c);
            match next {
                Some(d) if d == k => {
                    hits += 1;
                    break;
                }
                Some(d) if d < k => at = d,
                _ => break,
            }
        }
    }
    let estimate = hits as f64 / paths as f64;
    HitEstimate {
        estimate,
        stderr: (estimate * (1.0 - estimate) / paths as f64).sqrt(),
        hits,
        paths,
    }
}

/// Critical scale below which the drift margin inequality is guaranteed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalScale {
    /// Minimum of `((1 - w_kk) / (J w_jk))^(1/(j-k))`; may exceed one.
    pub raw: f64,
    /// `min(raw, 1)`, the value sweeps honor since `r` lives in `(0, 1)`.
    pub clamped: f64,
}

pub fn compute_r0<T: Scalar>(w: &WMatrix<T>) -> CriticalScale {
    let n = w.stations();
    let mut raw = f64::INFINITY;
    for k in 0..n {
        for j in k + 1..n {
            let wjk = w.get(j, k);
            if wjk.is_negligible() || wjk.to_f64().abs() <= 1e-12 {
                continue;
            }
            let base = (1.0 - w.get(k, k).to_f64()) / (n as f64 * wjk.to_f64());
            let candidate = base.powf(1.0 / (j - k) as f64);
            raw = raw.min(candidate);
        }
    }
    if raw.is_infinite() {
        raw = 1.0;
    }
    CriticalScale {
        raw,
        clamped: raw.min(1.0),
    }
}

/// `h_k(r_e, r_s) = sum_j arrival[j] r_e,j + sum_j service[j] r_s,j`.
#[derive(Debug, Clone, PartialEq)]
pub struct HCoefficients<T> {
    /// `-u_j alpha_j` for `j <= k`, zero above.
    pub arrival: Vec<T>,
    /// `+mu_k`, the own-service weight.
    pub own_service: T,
    /// `-w_jk mu_j` for `j >= k`, zero below.
    pub downstream: Vec<T>,
}

impl<T: Scalar> HCoefficients<T> {
    /// Combined weight on `r_s,j`.
    pub fn service(&self, station: usize, k: usize) -> T {
        if station == k {
            self.own_service.clone() + self.downstream[station].clone()
        } else {
            self.downstream[station].clone()
        }
    }
}

/// Per-station vectors and coefficients that shape the test functions.
#[derive(Debug, Clone, PartialEq)]
pub struct HeavyTrafficProfile<T> {
    pub w: WMatrix<T>,
    pub r0: CriticalScale,
    /// `u^(k) = (w_1k, ..., w_{k-1,k}, 1, 0, ..., 0)`.
    pub u: Vec<Vec<T>>,
    pub h: Vec<HCoefficients<T>>,
}

impl<T: Scalar> HeavyTrafficProfile<T> {
    pub fn new(alpha: &[T], mu: &[T], p: &RoutingMatrix<T>) -> Result<Self, SingularMatrix> {
        let w = compute_w(p)?;
        Ok(Self::from_w(w, alpha, mu))
    }

    pub fn from_w(w: WMatrix<T>, alpha: &[T], mu: &[T]) -> Self {
        let n = w.stations();
        let r0 = compute_r0(&w);
        let u: Vec<Vec<T>> = (0..n).map(|k| u_vector(&w, k)).collect();
        let h = (0..n)
            .map(|k| HCoefficients {
                arrival: (0..n)
                    .map(|j| {
                        if j <= k {
                            -(u[k][j].clone() * alpha[j].clone())
                        } else {
                            T::zero()
                        }
                    })
                    .collect(),
                own_service: mu[k].clone(),
                downstream: (0..n)
                    .map(|j| {
                        if j >= k {
                            -(w.get(j, k).clone() * mu[j].clone())
                        } else {
                            T::zero()
                        }
                    })
                    .collect(),
            })
            .collect();
        Self { w, r0, u, h }
    }
}

pub fn u_vector<T: Scalar>(w: &WMatrix<T>, k: usize) -> Vec<T> {
    (0..w.stations())
        .map(|j| match j.cmp(&k) {
            std::cmp::Ordering::Less => w.get(j, k).clone(),
            std::cmp::Ordering::Equal => T::one(),
            std::cmp::Ordering::Greater => T::zero(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftMargin<T> {
    /// `-sum_{j<=k} u_j alpha_j + mu_k - sum_{j>=k} w_jk mu_j`.
    pub lhs: T,
    /// `(1 - w_kk) r^k - sum_{j>k} w_jk r^j`.
    pub identity_rhs: T,
    /// `(1/J)(1 - w_kk) r^k`.
    pub lower_bound: T,
}

impl<T: Scalar> DriftMargin<T> {
    pub fn identity_gap(&self) -> T {
        (self.lhs.clone() - self.identity_rhs.clone()).abs()
    }
}

pub fn drift_margin<T: Scalar>(
    alpha: &[T],
    lambda: &[T],
    w: &WMatrix<T>,
    r: T,
    k: usize,
) -> DriftMargin<T> {
    let n = w.stations();
    let mu = multiscale_service_rates(lambda, r.clone());
    let u = u_vector(w, k);
    let mut lhs = mu[k].clone();
    for j in 0..=k {
        lhs = lhs - u[j].clone() * alpha[j].clone();
    }
    for j in k..n {
        lhs = lhs - w.get(j, k).clone() * mu[j].clone();
    }
    let rk = r.powi(k as u32 + 1);
    let own = (T::one() - w.get(k, k).clone()) * rk;
    let identity_rhs = (k + 1..n).fold(own.clone(), |acc, j| {
        acc - w.get(j, k).clone() * r.powi(j as u32 + 1)
    });
    DriftMargin {
        lhs,
        identity_rhs,
        lower_bound: own / T::from_count(n),
    }
}

/// Everything the static analysis derives for one spec at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticReport<T> {
    pub r: T,
    pub lambda: Vec<T>,
    pub mu: Vec<T>,
    pub rho: Vec<T>,
    pub profile: HeavyTrafficProfile<T>,
    pub drift: Vec<DriftMargin<T>>,
}

impl<T: Scalar> StaticReport<T> {
    pub fn compute(spec: &NetworkSpec, r: T) -> Result<Self, AnalysisError> {
        let alpha: Vec<T> = spec.alpha_exact();
        let p: RoutingMatrix<T> = spec.routing_exact();
        let traffic = solve_traffic(&alpha, &p)?;
        let lambda = traffic.lambda().to_vec();
        let mu = multiscale_service_rates(&lambda, r.clone());
        let rho = traffic.rho(r.clone());
        let profile = HeavyTrafficProfile::new(&alpha, &mu, &p)?;
        let drift = (0..p.stations())
            .map(|k| drift_margin(&alpha, &lambda, &profile.w, r.clone(), k))
            .collect();
        Ok(Self {
            r,
            lambda,
            mu,
            rho,
            profile,
            drift,
        })
    }

    /// JSON view with every number rendered through `Display`.
    pub fn to_json(&self) -> serde_json::Value {
        let s = |v: &T| serde_json::Value::String(v.to_string());
        let vec = |v: &[T]| serde_json::Value::Array(v.iter().map(s).collect());
        let n = self.lambda.len();
        serde_json::json!({
            "r": s(&self.r),
            "lambda": vec(&self.lambda),
            "mu": vec(&self.mu),
            "rho": vec(&self.rho),
            "w": self.profile.w.to_rows().iter().map(|row| vec(row)).collect::<Vec<_>>(),
            "r0": {
                "raw": crate::decimal::dec(self.profile.r0.raw),
                "clamped": crate::decimal::dec(self.profile.r0.clamped),
            },
            "u": self.profile.u.iter().map(|u| vec(u)).collect::<Vec<_>>(),
            "h": (0..n).map(|k| {
                let h = &self.profile.h[k];
                serde_json::json!({
                    "k": k + 1,
                    "arrival": vec(&h.arrival),
                    "own_service": s(&h.own_service),
                    "downstream": vec(&h.downstream),
                })
            }).collect::<Vec<_>>(),
            "drift": self.drift.iter().enumerate().map(|(k, d)| serde_json::json!({
                "k": k + 1,
                "lhs": s(&d.lhs),
                "identity_rhs": s(&d.identity_rhs),
                "lower_bound": s(&d.lower_bound),
                "identity_gap": s(&d.identity_gap()),
            })).collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::SimRng;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use rand::SeedableRng;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn tandem() -> RoutingMatrix<f64> {
        RoutingMatrix::new(vec![vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap()
    }

    fn feedback_to_front() -> RoutingMatrix<f64> {
        RoutingMatrix::new(vec![vec![0.0, 0.0], vec![0.8, 0.0]]).unwrap()
    }

    #[test]
    fn traffic_examples() {
        let t = solve_traffic(&[2.0, 3.0], &RoutingMatrix::zeros(2)).unwrap();
        assert_eq!(t.lambda(), &[2.0, 3.0]);
        let t = solve_traffic(&[1.0, 0.0], &tandem()).unwrap();
        assert_eq!(t.lambda(), &[1.0, 1.0]);
        let fb = RoutingMatrix::new(vec![vec![0.5]]).unwrap();
        let t = solve_traffic(&[0.5], &fb).unwrap();
        assert!((t.lambda()[0] - 1.0_f64).abs() < 1e-15);
    }

    #[test]
    fn exact_traffic_in_rationals() {
        let p = RoutingMatrix::new(vec![vec![rat(0, 1), rat(0, 1)], vec![rat(4, 5), rat(0, 1)]])
            .unwrap();
        let t = solve_traffic(&[rat(1, 5), rat(1, 1)], &p).unwrap();
        assert_eq!(t.lambda(), &[rat(1, 1), rat(1, 1)]);
        assert_eq!(t.residual(&[rat(1, 5), rat(1, 1)], &p), rat(0, 1));
        assert_eq!(t.rho(rat(1, 10)), vec![rat(10, 11), rat(100, 101)]);
    }

    #[test]
    fn w_examples() {
        let w = compute_w(&RoutingMatrix::<f64>::zeros(3)).unwrap();
        assert!(w.to_rows().iter().flatten().all(|&v| v == 0.0));
        let w = compute_w(&tandem()).unwrap();
        assert_eq!(w.to_rows(), vec![vec![0.0, 1.0], vec![0.0, 0.0]]);
        let w = compute_w(&feedback_to_front()).unwrap();
        assert_eq!(w.to_rows(), vec![vec![0.0, 0.0], vec![0.8, 0.0]]);
    }

    #[test]
    fn w_satisfies_recursion_with_self_loops() {
        let p = RoutingMatrix::new(vec![
            vec![0.2, 0.3, 0.1],
            vec![0.4, 0.1, 0.3],
            vec![0.1, 0.5, 0.2],
        ])
        .unwrap();
        let w = compute_w(&p).unwrap();
        assert!(w.recursion_residual(&p) < 1e-14);
        for k in 0..3 {
            assert!(*w.get(k, k) < 1.0);
        }
        // w_11 = P_11: a job leaving station 1 must re-enter it directly.
        assert!((w.get(0, 0) - 0.2_f64).abs() < 1e-15);
    }

    #[test]
    fn r0_examples() {
        assert_eq!(compute_r0(&compute_w(&tandem()).unwrap()).raw, 1.0);
        let r0 = compute_r0(&compute_w(&feedback_to_front()).unwrap());
        assert!((r0.raw - 0.625).abs() < 1e-15);
        let single = RoutingMatrix::new(vec![vec![0.7]]).unwrap();
        assert_eq!(compute_r0(&compute_w(&single).unwrap()).raw, 1.0);
    }

    #[test]
    fn r0_may_exceed_one_and_is_clamped() {
        let p = RoutingMatrix::new(vec![vec![0.0, 0.0], vec![0.1, 0.0]]).unwrap();
        let r0 = compute_r0(&compute_w(&p).unwrap());
        assert!((r0.raw - 5.0).abs() < 1e-12);
        assert_eq!(r0.clamped, 1.0);
    }

    #[test]
    fn tandem_drift_margins() {
        let w = compute_w(&tandem()).unwrap();
        let d1 = drift_margin(&[1.0, 0.0], &[1.0, 1.0], &w, 0.1, 0);
        assert!((d1.lhs - 0.1).abs() < 1e-15);
        assert!((d1.identity_rhs - 0.1).abs() < 1e-15);
        assert!((d1.lower_bound - 0.05).abs() < 1e-15);
        let d2 = drift_margin(&[1.0, 0.0], &[1.0, 1.0], &w, 0.1, 1);
        assert!((d2.lhs - 0.01).abs() < 1e-15);
    }

    #[test]
    fn drift_vanishes_with_r() {
        let w = compute_w(&feedback_to_front()).unwrap();
        for k in 0..2 {
            let d = drift_margin(&[0.2, 1.0], &[1.0, 1.0], &w, 1e-9, k);
            assert!(d.lhs.abs() < 1e-8 && d.identity_rhs.abs() < 1e-8 && d.lower_bound < 1e-8);
        }
    }

    #[test]
    fn exact_drift_identity() {
        let p = RoutingMatrix::new(vec![vec![rat(0, 1), rat(0, 1)], vec![rat(4, 5), rat(0, 1)]])
            .unwrap();
        let w = compute_w(&p).unwrap();
        for k in 0..2 {
            let d = drift_margin(&[rat(1, 5), rat(1, 1)], &[rat(1, 1), rat(1, 1)], &w, rat(1, 3), k);
            assert_eq!(d.lhs, d.identity_rhs);
        }
    }

    #[test]
    fn monte_carlo_w_examples() {
        let mut rng = SimRng::seed_from_u64(3);
        let est = monte_carlo_w(&tandem(), 0, 1, 1000, &mut rng);
        assert_eq!(est.estimate, 1.0);
        let est = monte_carlo_w(&RoutingMatrix::zeros(2), 1, 0, 1000, &mut rng);
        assert_eq!(est.estimate, 0.0);
        let est = monte_carlo_w(&feedback_to_front(), 1, 0, 1_000_000, &mut rng);
        assert!((est.estimate - 0.8).abs() <= 3.0 * est.stderr, "{est:?}");
    }
}
