//! Soft truncation kernels `g_n(z) = z^n exp(-z/kappa)` and
//! `G_n(z) = int_0^z g_n(y) dy`.

use num_traits::Float;
use rand::Rng;
use serde::Serialize;

fn lit<F: Float>(v: f64) -> F {
    F::from(v).expect("representable literal")
}

/// `z^n exp(-z/kappa)` with `0^0 = 1`.
pub fn g<F: Float>(n: F, kappa: F, z: F) -> F {
    let zn = if n == F::zero() {
        F::one()
    } else if z == F::zero() {
        F::zero()
    } else {
        z.powf(n)
    };
    zn * (-z / kappa).exp()
}

/// `max_z g_n(z) = (kappa n / e)^n`, attained at `z = kappa n`.
pub fn g_sup<F: Float>(n: F, kappa: F) -> F {
    if n == F::zero() {
        F::one()
    } else {
        (kappa * n / lit::<F>(std::f64::consts::E)).powf(n)
    }
}

/// `G_n(z)` for integer `n`. Uses the integration-by-parts recurrence
/// `G_n = kappa (n G_{n-1} - z^n e^{-z/kappa})`, `G_0 = kappa (1 - e^{-z/kappa})`
/// when `z/kappa > n + 1`; below that the recurrence cancels badly and the
/// power series of the lower incomplete gamma function is summed instead.
pub fn big_g_int<F: Float>(n: u32, kappa: F, z: F) -> F {
    if z <= F::zero() {
        return F::zero();
    }
    let x = z / kappa;
    let np1 = F::from(n + 1).expect("small integer");
    let scale = kappa.powi(n as i32 + 1);
    if x <= np1 {
        let mut term = F::one() / np1;
        let mut sum = term;
        let mut k = F::one();
        for _ in 0..10_000 {
            term = term * x / (np1 + k);
            sum = sum + term;
            if term <= sum * F::epsilon() {
                break;
            }
            k = k + F::one();
        }
        return scale * x.powi(n as i32 + 1) * (-x).exp() * sum;
    }
    let e = (-x).exp();
    let mut acc = -(-x).exp_m1();
    let mut xm = F::one();
    for m in 1..=n {
        xm = xm * x;
        acc = F::from(m).expect("small integer") * acc - xm * e;
    }
    scale * acc
}

/// `G_n(z)` for real `n >= 0`; integer orders use [`big_g_int`].
pub fn big_g(n: f64, kappa: f64, z: f64) -> f64 {
    if n.fract() == 0.0 && (0.0..=1e6).contains(&n) {
        return big_g_int(n as u32, kappa, z);
    }
    if z <= 0.0 {
        return 0.0;
    }
    let a = n + 1.0;
    kappa.powf(a) * statrs::function::gamma::gamma(a) * statrs::function::gamma::gamma_lr(a, z / kappa)
}

/// `sup_z G_n(z) = kappa^(n+1) Gamma(n+1)`.
pub fn big_g_sup(n: f64, kappa: f64) -> f64 {
    kappa.powf(n + 1.0) * statrs::function::gamma::gamma(n + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelTuple {
    pub n: u32,
    pub kappa: f64,
    pub z: f64,
    pub c: f64,
}

/// Outcome of the three kernel inequalities over a batch of tuples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelCheckReport {
    pub tuples: u64,
    /// Violations of (i) the sup bound, (ii) the Lipschitz-type bound on
    /// `g`, (iii) the increment bound on `G`.
    pub violations: [u64; 3],
    /// Worst `(lhs - rhs) / scale` seen for each property.
    pub worst: [f64; 3],
    pub slack: f64,
}

impl KernelCheckReport {
    pub fn passed(&self) -> bool {
        self.violations.iter().all(|&v| v == 0)
    }
}

pub const KERNEL_SLACK: f64 = 1e-12;

/// Checks, for each `(n, kappa, z, c)` with `c >= -z`:
/// (i) `g_n(z) <= (kappa n/e)^n`;
/// (ii) `|g_n(z+c) - g_n(z)| <= (n+1)|c|(z+|c|)^(n-1)`;
/// (iii) `G_n(z+c) - G_n(z) <= c (z+c)^n e^{-z/kappa}`.
/// An inequality counts as violated when `lhs - rhs` exceeds
/// `KERNEL_SLACK * max(1, |terms|)`.
pub fn check_kernels(tuples: &[KernelTuple]) -> KernelCheckReport {
    let mut report = KernelCheckReport {
        tuples: tuples.len() as u64,
        violations: [0; 3],
        worst: [f64::NEG_INFINITY; 3],
        slack: KERNEL_SLACK,
    };
    let mut record = |i: usize, lhs: f64, rhs: f64, scale: f64| {
        let excess = (lhs - rhs) / scale.max(1.0);
        report.worst[i] = report.worst[i].max(excess);
        if excess > KERNEL_SLACK || !excess.is_finite() {
            report.violations[i] += 1;
        }
    };
    for t in tuples {
        assert!(t.c >= -t.z, "c must satisfy c >= -z");
        let n = f64::from(t.n);
        let gz = g(n, t.kappa, t.z);
        let gzc = g(n, t.kappa, t.z + t.c);
        let sup = g_sup(n, t.kappa);
        record(0, gz, sup, gz.abs().max(sup));

        let lhs = (gzc - gz).abs();
        let rhs = (n + 1.0) * t.c.abs() * (t.z + t.c.abs()).powf(n - 1.0);
        let rhs = if t.c == 0.0 { 0.0 } else { rhs };
        record(1, lhs, rhs, gz.abs().max(gzc.abs()).max(rhs));

        let big_z = big_g_int(t.n, t.kappa, t.z);
        let big_zc = big_g_int(t.n, t.kappa, t.z + t.c);
        let lhs = big_zc - big_z;
        let rhs = t.c * (t.z + t.c).powi(t.n as i32) * (-t.z / t.kappa).exp();
        record(2, lhs, rhs, big_z.abs().max(big_zc.abs()).max(rhs.abs()));
    }
    report
}

/// Random tuples: `n` in `1..=6`, `kappa` log-uniform in `[0.05, 200]`,
/// `z` spread over `[0, 20 kappa n]` with mass near the maximizer `kappa n`,
/// and `c` in `[-z, 5 kappa n]`.
pub fn random_kernel_tuples<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<KernelTuple> {
    (0..count)
        .map(|i| {
            let n = rng.random_range(1..=6u32);
            let kappa = (rng.random_range(0.05f64.ln()..200f64.ln())).exp();
            let peak = kappa * f64::from(n);
            let z = match i % 4 {
                0 => 0.0,
                1 => peak * rng.random_range(0.9..1.1),
                _ => rng.random_range(0.0..20.0 * peak),
            };
            let c = if i % 7 == 0 {
                0.0
            } else {
                rng.random_range(-z..=5.0 * peak)
            };
            KernelTuple { n, kappa, z, c }
        })
        .collect()
}
