//! Unit-mean interarrival and service time families.
//!
//! Every family is parameterized so its mean is exactly one; an actual time
//! is obtained by dividing a variate by the stream's rate.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, LogNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaCdf, Normal};
use statrs::function::gamma::{gamma, ln_gamma};
use thiserror::Error;

use crate::decimal::Decimal;

pub type SimRng = rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("Erlang shape must be a positive integer")]
    ErlangShape,
    #[error("hyperexponential branch probability {0} must lie in (0, 1)")]
    Probability(f64),
    #[error("hyperexponential mean ratio {0} must be positive")]
    Ratio(f64),
    #[error("lognormal sigma {0} must be positive")]
    Sigma(f64),
}

/// A closed set of unit-mean families with analytic moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum DistributionSpec {
    Exponential,
    Erlang {
        k: u32,
    },
    /// Two-phase mixture: with probability `p` an exponential whose mean is
    /// `ratio` times that of the other branch.
    Hyperexponential2 {
        p: Decimal,
        ratio: Decimal,
    },
    Deterministic,
    /// Uniform on `[0, 2]`.
    Uniform01x2,
    /// `exp(N(-sigma^2/2, sigma^2))`.
    LogNormal {
        sigma: Decimal,
    },
}

impl DistributionSpec {
    pub fn erlang(k: u32) -> Self {
        Self::Erlang { k }
    }

    pub fn hyperexponential(p: f64, ratio: f64) -> Self {
        Self::Hyperexponential2 {
            p: p.into(),
            ratio: ratio.into(),
        }
    }

    pub fn lognormal(sigma: f64) -> Self {
        Self::LogNormal {
            sigma: sigma.into(),
        }
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        match self {
            Self::Erlang { k } if *k == 0 => Err(DistributionError::ErlangShape),
            Self::Hyperexponential2 { p, ratio } => {
                let (p, ratio) = (p.value(), ratio.value());
                if !(p > 0.0 && p < 1.0) {
                    Err(DistributionError::Probability(p))
                } else if !(ratio > 0.0) {
                    Err(DistributionError::Ratio(ratio))
                } else {
                    Ok(())
                }
            }
            Self::LogNormal { sigma } if !(sigma.value() > 0.0) => {
                Err(DistributionError::Sigma(sigma.value()))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Exponential => "Exponential",
            Self::Erlang { .. } => "Erlang",
            Self::Hyperexponential2 { .. } => "Hyperexponential2",
            Self::Deterministic => "Deterministic",
            Self::Uniform01x2 => "Uniform01x2",
            Self::LogNormal { .. } => "LogNormal",
        }
    }

    /// Branch means `(m1, m2)` with `m1 = ratio * m2` and `p*m1 + (1-p)*m2 = 1`.
    fn hyper_means(p: f64, ratio: f64) -> (f64, f64) {
        let m2 = 1.0 / (p * ratio + 1.0 - p);
        (ratio * m2, m2)
    }

    /// Exact `E[T^m]` for real `m >= 0`.
    ///
    /// All families here have finite moments of every order; the value can
    /// still overflow to `+inf`, which callers must treat as "does not exist".
    pub fn raw_moment(&self, m: f64) -> f64 {
        assert!(m >= 0.0, "moment order must be nonnegative");
        if m == 0.0 {
            return 1.0;
        }
        match self {
            Self::Exponential => gamma(m + 1.0),
            Self::Erlang { k } => {
                let k = f64::from(*k);
                (ln_gamma(k + m) - ln_gamma(k) - m * k.ln()).exp()
            }
            Self::Hyperexponential2 { p, ratio } => {
                let p = p.value();
                let (m1, m2) = Self::hyper_means(p, ratio.value());
                gamma(m + 1.0) * (p * m1.powf(m) + (1.0 - p) * m2.powf(m))
            }
            Self::Deterministic => 1.0,
            Self::Uniform01x2 => 2f64.powf(m) / (m + 1.0),
            Self::LogNormal { sigma } => {
                let s = sigma.value();
                (m * (m - 1.0) * s * s / 2.0).exp()
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.raw_moment(1.0)
    }

    pub fn variance(&self) -> f64 {
        self.raw_moment(2.0) - 1.0
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            Self::Exponential => -(-x).exp_m1(),
            Self::Erlang { k } => {
                let k = f64::from(*k);
                GammaCdf::new(k, k).expect("valid Erlang").cdf(x)
            }
            Self::Hyperexponential2 { p, ratio } => {
                let p = p.value();
                let (m1, m2) = Self::hyper_means(p, ratio.value());
                1.0 - p * (-x / m1).exp() - (1.0 - p) * (-x / m2).exp()
            }
            Self::Deterministic => {
                if x >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Uniform01x2 => (x / 2.0).min(1.0),
            Self::LogNormal { sigma } => {
                let s = sigma.value();
                Normal::new(-s * s / 2.0, s).expect("valid normal").cdf(x.ln())
            }
        }
    }

    /// Smallest `x` with `cdf(x) >= q`, for `q` in `(0, 1)`.
    pub fn quantile(&self, q: f64) -> f64 {
        assert!(q > 0.0 && q < 1.0, "quantile level must lie in (0, 1)");
        match self {
            Self::Exponential => -(-q).ln_1p(),
            Self::Deterministic => 1.0,
            Self::Uniform01x2 => 2.0 * q,
            Self::LogNormal { sigma } => {
                let s = sigma.value();
                (-s * s / 2.0 + s * Normal::new(0.0, 1.0).expect("std normal").inverse_cdf(q)).exp()
            }
            Self::Erlang { .. } | Self::Hyperexponential2 { .. } => {
                let mut hi = 1.0;
                while self.cdf(hi) < q {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid) < q {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-14 * hi {
                        break;
                    }
                }
                hi
            }
        }
    }

    /// Value carried with positive probability, if the law has an atom.
    pub fn atom(&self) -> Option<f64> {
        matches!(self, Self::Deterministic).then_some(1.0)
    }

    pub fn sampler(&self) -> Sampler {
        self.validate().expect("distribution validated before sampling");
        match self {
            Self::Exponential => Sampler::Exponential,
            Self::Erlang { k } => {
                let k = f64::from(*k);
                Sampler::Gamma(Gamma::new(k, 1.0 / k).expect("valid gamma"))
            }
            Self::Hyperexponential2 { p, ratio } => {
                let (m1, m2) = Self::hyper_means(p.value(), ratio.value());
                Sampler::Hyper {
                    p: p.value(),
                    m1,
                    m2,
                }
            }
            Self::Deterministic => Sampler::Deterministic,
            Self::Uniform01x2 => Sampler::Uniform,
            Self::LogNormal { sigma } => {
                let s = sigma.value();
                Sampler::LogNormal(LogNormal::new(-s * s / 2.0, s).expect("valid lognormal"))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler().sample(rng)
    }
}

/// Pre-built variate generator for one unitized stream.
#[derive(Debug, Clone)]
pub enum Sampler {
    Exponential,
    Gamma(Gamma<f64>),
    Hyper { p: f64, m1: f64, m2: f64 },
    Deterministic,
    Uniform,
    LogNormal(LogNormal<f64>),
}

impl Sampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let t = match self {
            Self::Exponential => Exp1.sample(rng),
            Self::Gamma(g) => g.sample(rng),
            Self::Hyper { p, m1, m2 } => {
                let mean = if rng.random::<f64>() < *p { *m1 } else { *m2 };
                mean * <Exp1 as Distribution<f64>>::sample(&Exp1, rng)
            }
            Self::Deterministic => 1.0,
            Self::Uniform => 2.0 * rng.random::<f64>(),
            Self::LogNormal(d) => d.sample(rng),
        };
        // Residual clocks must stay strictly positive between events.
        if t > 0.0 {
            t
        } else {
            f64::MIN_POSITIVE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn corpus() -> Vec<DistributionSpec> {
        vec![
            DistributionSpec::Exponential,
            DistributionSpec::erlang(1),
            DistributionSpec::erlang(4),
            DistributionSpec::hyperexponential(0.5, 4.0),
            DistributionSpec::hyperexponential(0.1, 20.0),
            DistributionSpec::Deterministic,
            DistributionSpec::Uniform01x2,
            DistributionSpec::lognormal(0.5),
            DistributionSpec::lognormal(1.0),
        ]
    }

    #[test]
    fn unit_mean_for_every_family() {
        for d in corpus() {
            assert!((d.raw_moment(1.0) - 1.0).abs() <= 1e-12, "{d:?}");
        }
    }

    #[test]
    fn analytic_moments() {
        assert!((DistributionSpec::Exponential.raw_moment(2.0) - 2.0).abs() < 1e-12);
        assert_eq!(DistributionSpec::Deterministic.raw_moment(7.0), 1.0);
        assert!((DistributionSpec::erlang(2).raw_moment(2.0) - 1.5).abs() < 1e-12);
        // Uniform(0,2): E[T^2] = 4/3.
        assert!((DistributionSpec::Uniform01x2.raw_moment(2.0) - 4.0 / 3.0).abs() < 1e-12);
        // lognormal: exp(m(m-1)s^2/2)
        let ln = DistributionSpec::lognormal(0.5);
        assert!((ln.raw_moment(3.0) - (3.0 * 2.0 * 0.25 / 2.0f64).exp()).abs() < 1e-12);
        // H2(p=0.5, ratio=4): means 1.6 and 0.4, E[T^2] = 2(0.5*2.56 + 0.5*0.16) = 2.72.
        let h = DistributionSpec::hyperexponential(0.5, 4.0);
        assert!((h.raw_moment(2.0) - 2.72).abs() < 1e-12);
    }

    #[test]
    fn deterministic_samples_are_one() {
        let mut rng = SimRng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(DistributionSpec::Deterministic.sample(&mut rng), 1.0);
        }
    }

    #[test]
    fn exponential_sample_mean() {
        let mut rng = SimRng::seed_from_u64(7);
        let s = DistributionSpec::Exponential.sampler();
        let n = 1_000_000;
        let mean = (0..n).map(|_| s.sample(&mut rng)).sum::<f64>() / n as f64;
        // 3 sigma / sqrt(n) with sigma = 1
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn erlang_sample_variance() {
        let mut rng = SimRng::seed_from_u64(11);
        let s = DistributionSpec::erlang(4).sampler();
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 0.25).abs() < 0.01, "{var}");
    }

    #[test]
    fn empirical_moments_within_five_standard_errors() {
        let n = 1_000_000;
        for (i, d) in corpus().into_iter().enumerate() {
            let mut rng = SimRng::seed_from_u64(100 + i as u64);
            let s = d.sampler();
            let xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
            for m in [2.0, 3.0, 4.0] {
                let exact = d.raw_moment(m);
                let var = d.raw_moment(2.0 * m) - exact * exact;
                let est = xs.iter().map(|x| x.powf(m)).sum::<f64>() / n as f64;
                let se = (var / n as f64).sqrt();
                let tol = 5.0 * se + 1e-12;
                assert!((est - exact).abs() <= tol, "{d:?} m={m}: {est} vs {exact} (se {se})");
            }
        }
    }

    #[test]
    fn quantiles_invert_cdf() {
        for d in corpus() {
            if d.atom().is_some() {
                continue;
            }
            for q in [0.1, 0.5, 0.999] {
                let x = d.quantile(q);
                assert!((d.cdf(x) - q).abs() < 1e-9, "{d:?} q={q}");
            }
        }
        assert!((DistributionSpec::Exponential.quantile(0.999) - 1000f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn json_form() {
        let d = DistributionSpec::hyperexponential(0.5, 4.0);
        let text = serde_json::to_string(&d).unwrap();
        assert_eq!(text, r#"{"family":"Hyperexponential2","p":"0.5","ratio":"4"}"#);
        let back: DistributionSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
        let e: DistributionSpec = serde_json::from_str(r#"{"family":"Erlang","k":3}"#).unwrap();
        assert_eq!(e, DistributionSpec::erlang(3));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(DistributionSpec::erlang(0).validate().is_err());
        assert!(DistributionSpec::hyperexponential(1.0, 2.0).validate().is_err());
        assert!(DistributionSpec::hyperexponential(0.5, 0.0).validate().is_err());
        assert!(DistributionSpec::lognormal(0.0).validate().is_err());
    }
}
