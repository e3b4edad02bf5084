//! Output analysis: batch means, trend and goodness-of-fit tests.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal, StudentsT};

use crate::linalg::{self, DenseMatrix};

/// Two-sided Student-t quantile for `confidence` with `dof` degrees of freedom.
pub fn t_quantile(confidence: f64, dof: usize) -> f64 {
    assert!(confidence > 0.0 && confidence < 1.0);
    if dof == 0 {
        return f64::INFINITY;
    }
    let t = StudentsT::new(0.0, 1.0, dof as f64).expect("positive degrees of freedom");
    t.inverse_cdf(0.5 + confidence / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatchSummary {
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
    pub half_width: f64,
    pub confidence: f64,
    pub batches: usize,
}

impl BatchSummary {
    pub fn from_batches(values: &[f64], confidence: f64) -> Self {
        let b = values.len();
        assert!(b > 0, "no batches");
        let mean = values.iter().sum::<f64>() / b as f64;
        let std_dev = if b > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1) as f64).sqrt()
        } else {
            f64::INFINITY
        };
        let std_error = std_dev / (b as f64).sqrt();
        Self {
            mean,
            std_dev,
            std_error,
            half_width: t_quantile(confidence, b - 1) * std_error,
            confidence,
            batches: b,
        }
    }

    /// Batch summary of `mean` whose per-batch linearized deviations are
    /// `deviations`; used for ratio estimators.
    pub fn from_linearized(mean: f64, deviations: &[f64], confidence: f64) -> Self {
        let mut s = Self::from_batches(deviations, confidence);
        s.mean = mean;
        s
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn covers(&self, value: f64) -> bool {
        (self.mean - value).abs() <= self.half_width
    }

    /// `|mean - value|` in standard errors.
    pub fn z_score(&self, value: f64) -> f64 {
        let d = (self.mean - value).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// Ratio estimator `sum(num) / sum(den)` over batches with a delta-method CI.
pub fn ratio_summary(num: &[f64], den: &[f64], confidence: f64) -> BatchSummary {
    assert_eq!(num.len(), den.len());
    let total_den: f64 = den.iter().sum();
    let est = num.iter().sum::<f64>() / total_den;
    let scale = total_den / den.len() as f64;
    let dev: Vec<f64> = num
        .iter()
        .zip(den)
        .map(|(n, d)| est + (n - est * d) / scale)
        .collect();
    BatchSummary::from_linearized(est, &dev, confidence)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MannKendall {
    pub n: usize,
    pub s: i64,
    /// One-sided p-value against an increasing trend.
    pub p_increasing: f64,
    pub exact: bool,
}

impl MannKendall {
    pub fn rejects_increasing(&self, level: f64) -> bool {
        self.p_increasing < level
    }
}

fn mk_statistic(x: &[f64]) -> i64 {
    let mut s = 0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            s += match x[j].partial_cmp(&x[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    s
}

fn permutations(items: &mut Vec<f64>, k: usize, visit: &mut dyn FnMut(&[f64])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Mann-Kendall test on a series ordered by increasing stress. The null law of
/// `S` is enumerated exactly for `n <= 8`; larger series use the normal
/// approximation with continuity correction.
pub fn mann_kendall(values: &[f64]) -> MannKendall {
    let n = values.len();
    let s = mk_statistic(values);
    if n < 2 {
        return MannKendall {
            n,
            s,
            p_increasing: 1.0,
            exact: true,
        };
    }
    if n <= 8 {
        let mut items = values.to_vec();
        let (mut total, mut at_least) = (0u64, 0u64);
        permutations(&mut items, 0, &mut |perm| {
            total += 1;
            if mk_statistic(perm) >= s {
                at_least += 1;
            }
        });
        return MannKendall {
            n,
            s,
            p_increasing: at_least as f64 / total as f64,
            exact: true,
        };
    }
    let nf = n as f64;
    let var = nf * (nf - 1.0) * (2.0 * nf + 5.0) / 18.0;
    let z = if s > 0 {
        (s as f64 - 1.0) / var.sqrt()
    } else if s < 0 {
        (s as f64 + 1.0) / var.sqrt()
    } else {
        0.0
    };
    let normal = Normal::standard();
    MannKendall {
        n,
        s,
        p_increasing: 1.0 - normal.cdf(z),
        exact: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HotellingTest {
    pub t2: f64,
    pub f: f64,
    pub dof: (usize, usize),
    pub p_value: f64,
}

/// Batch-means chi-square analogue: tests whether the mean of the per-batch
/// cell-probability vectors equals `expected`, using Hotelling's T² so that
/// serial dependence within batches does not inflate the statistic. The last
/// cell is dropped because the cells sum to one.
pub fn batch_cell_test(batches: &[Vec<f64>], expected: &[f64]) -> Option<HotellingTest> {
    let b = batches.len();
    let p = expected.len().checked_sub(1)?;
    if p == 0 || b <= p + 1 {
        return None;
    }
    let diffs: Vec<Vec<f64>> = batches
        .iter()
        .map(|v| (0..p).map(|i| v[i] - expected[i]).collect())
        .collect();
    let mean: Vec<f64> = (0..p)
        .map(|i| diffs.iter().map(|d| d[i]).sum::<f64>() / b as f64)
        .collect();
    let mut cov = DenseMatrix::<f64>::zeros(p, p);
    for d in &diffs {
        for i in 0..p {
            for j in 0..p {
                cov[(i, j)] += (d[i] - mean[i]) * (d[j] - mean[j]) / (b - 1) as f64;
            }
        }
    }
    let x = linalg::solve(&cov, &mean).ok()?;
    let t2 = b as f64 * mean.iter().zip(&x).map(|(m, v)| m * v).sum::<f64>();
    let d2 = b - p;
    let f = t2 * d2 as f64 / (p as f64 * (b - 1) as f64);
    let dist = FisherSnedecor::new(p as f64, d2 as f64).ok()?;
    Some(HotellingTest {
        t2,
        f,
        dof: (p, d2),
        p_value: 1.0 - dist.cdf(f),
    })
}

/// Kolmogorov-Smirnov distance between a weighted discrete sample
/// `(value, weight)` and the exponential law with the given mean.
pub fn ks_distance_exponential(sample: &[(f64, f64)], mean: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = sample.iter().copied().filter(|p| p.1 > 0.0).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pts.iter().map(|p| p.1).sum();
    let cdf = |x: f64| if x <= 0.0 { 0.0 } else { 1.0 - (-x / mean).exp() };
    let mut acc = 0.0;
    let mut worst: f64 = 0.0;
    for (v, w) in pts {
        let before = acc / total;
        acc += w;
        let after = acc / total;
        let f = cdf(v);
        worst = worst.max((f - before).abs()).max((after - f).abs());
    }
    worst
}

/// Streaming Pearson correlation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Comoment {
    pub n: u64,
    mean_x: f64,
    mean_y: f64,
    m2_x: f64,
    m2_y: f64,
    c_xy: f64,
}

impl Comoment {
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean_x;
        self.mean_x += dx / n;
        let dy = y - self.mean_y;
        self.mean_y += dy / n;
        self.m2_x += dx * (x - self.mean_x);
        self.m2_y += dy * (y - self.mean_y);
        self.c_xy += dx * (y - self.mean_y);
    }

    /// `None` when either coordinate is (numerically) constant.
    pub fn correlation(&self) -> Option<f64> {
        let scale = self.m2_x * self.m2_y;
        let tiny = 1e-24 * (self.n as f64).powi(2);
        if self.n < 3 || self.m2_x <= tiny * (1.0 + self.mean_x.powi(2)) || self.m2_y <= tiny * (1.0 + self.mean_y.powi(2)) || scale <= 0.0 {
            return None;
        }
        Some(self.c_xy / scale.sqrt())
    }

    /// `r * sqrt(n)`, approximately standard normal under independence.
    pub fn z_score(&self) -> Option<f64> {
        self.correlation().map(|r| r * (self.n as f64).sqrt())
    }
}
