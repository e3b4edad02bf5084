use std::fmt;
use std::sync::Arc;

use crate::sim::{power, Functional, JumpRecord, SegmentRule, SimState};

use super::context::FunctionContext;
use super::kernels::{big_g, big_g_sup, g, g_sup};
use super::TestFunctionError;

/// Truncation levels. `residual` caps residual times at `kappa` (hard);
/// `queue` replaces queue powers by the soft kernels `g`, `G`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Truncation {
    pub residual: Option<f64>,
    pub queue: Option<f64>,
}

impl Truncation {
    pub const NONE: Truncation = Truncation {
        residual: None,
        queue: None,
    };

    pub fn residual(kappa: f64) -> Self {
        Self {
            residual: Some(kappa),
            queue: None,
        }
    }

    pub fn both(kappa: f64, qkappa: f64) -> Self {
        Self {
            residual: Some(kappa),
            queue: Some(qkappa),
        }
    }
}

/// Members of the family. `k` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Const(f64),
    /// `sum (r ^ kappa)^n` over interarrival residuals of `arrival_terms` and
    /// all service residuals.
    Psi { n: f64 },
    /// `h_k`, linear in residual times.
    H { k: usize },
    /// `r^{k(n-1)} [ (u'z)^{n+1}/(n+1) + (u'z)^n h_k ]`.
    Fkn { k: usize, n: f64 },
    /// `r^{kn} z_k^n psi_1`.
    FknD { k: usize, n: f64 },
    /// `r^{kn} z_k^n psi_{M-n+1}`.
    FknE { k: usize, n: f64 },
    /// `r^{kn} z_k^n psi_{M-n} psi_1`.
    FknF { k: usize, n: f64 },
    /// `psi_M psi_1`.
    F0F,
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Leaf(Kind, Truncation),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
}

/// A test function bound to its network context.
#[derive(Debug, Clone)]
pub struct TestFunction {
    ctx: Arc<FunctionContext>,
    expr: Expr,
}

fn cap(x: f64, kappa: Option<f64>) -> (f64, f64) {
    match kappa {
        Some(k) if x > k => (k, 0.0),
        _ => (x, 1.0),
    }
}

/// `(value, d value / d x)` of `(x ^ kappa)^n`, left derivative at the kink.
fn capped_power(x: f64, n: f64, kappa: Option<f64>) -> (f64, f64) {
    let (t, d) = cap(x, kappa);
    let v = power(t, n);
    let dv = if n == 0.0 || d == 0.0 {
        0.0
    } else {
        n * power(t, n - 1.0) * d
    };
    (v, dv)
}

fn integer_degree(n: f64) -> Option<u32> {
    (n >= 0.0 && n.fract() == 0.0 && n <= 1e6).then_some(n as u32)
}

impl FunctionContext {
    /// `(psi_n, A psi_n)` at `x`.
    fn psi(&self, x: &SimState, n: f64, kappa: Option<f64>) -> (f64, f64) {
        let mut v = 0.0;
        let mut a = 0.0;
        for &j in self.arrival_terms() {
            let (p, dp) = capped_power(x.re[j], n, kappa);
            v += p;
            a -= dp;
        }
        for j in 0..self.stations() {
            let (p, dp) = capped_power(x.rs[j], n, kappa);
            v += p;
            if x.z[j] > 0 {
                a -= dp;
            }
        }
        (v, a)
    }

    fn psi_bound(&self, n: f64, kappa: Option<f64>) -> Option<f64> {
        kappa.map(|k| self.psi_terms() as f64 * power(k, n))
    }

    fn h(&self, x: &SimState, k: usize, kappa: Option<f64>) -> (f64, f64) {
        let mut v = 0.0;
        let mut a = 0.0;
        for (j, &c) in self.h_arrival(k).iter().enumerate() {
            if c != 0.0 {
                let (t, d) = cap(x.re[j], kappa);
                v += c * t;
                a -= c * d;
            }
        }
        for (j, &c) in self.h_service(k).iter().enumerate() {
            if c != 0.0 {
                let (t, d) = cap(x.rs[j], kappa);
                v += c * t;
                if x.z[j] > 0 {
                    a -= c * d;
                }
            }
        }
        (v, a)
    }

    fn h_bound(&self, k: usize, kappa: Option<f64>) -> Option<f64> {
        let total: f64 = self
            .h_arrival(k)
            .iter()
            .chain(self.h_service(k))
            .map(|c| c.abs())
            .sum();
        kappa.map(|kap| total * kap)
    }

    fn uz(&self, x: &SimState, k: usize) -> f64 {
        self.u(k)
            .iter()
            .zip(&x.z)
            .map(|(u, &z)| u * z as f64)
            .sum()
    }

    /// `r^{k m}`.
    fn rk(&self, k: usize, m: f64) -> f64 {
        self.r().powf(k as f64 * m)
    }
}

/// `z^n` or `g_n(z)`.
fn queue_power(z: f64, n: f64, q: Option<f64>) -> f64 {
    match q {
        Some(kq) => g(n, kq, z),
        None => power(z, n),
    }
}

fn queue_power_sup(n: f64, q: Option<f64>) -> Option<f64> {
    q.map(|kq| g_sup(n, kq))
}

fn eval_kind(ctx: &FunctionContext, kind: Kind, tr: Truncation, x: &SimState) -> (f64, f64) {
    let m = ctx.moment_order();
    let kap = tr.residual;
    match kind {
        Kind::Const(c) => (c, 0.0),
        Kind::Psi { n } => ctx.psi(x, n, kap),
        Kind::H { k } => ctx.h(x, k, kap),
        Kind::Fkn { k, n } => {
            let s = ctx.rk(k, n - 1.0);
            let y = ctx.uz(x, k);
            let (a, b) = match tr.queue {
                Some(kq) => (big_g(n, kq, y), g(n, kq, y)),
                None => (power(y, n + 1.0) / (n + 1.0), power(y, n)),
            };
            let (h, ah) = ctx.h(x, k, kap);
            (s * (a + b * h), s * b * ah)
        }
        Kind::FknD { k, n } | Kind::FknE { k, n } | Kind::FknF { k, n } => {
            let c = ctx.rk(k, n) * queue_power(x.z[k - 1] as f64, n, tr.queue);
            let (p, ap) = match kind {
                Kind::FknD { .. } => ctx.psi(x, 1.0, kap),
                Kind::FknE { .. } => ctx.psi(x, m - n + 1.0, kap),
                _ => {
                    let (p, ap) = ctx.psi(x, m - n, kap);
                    let (q, aq) = ctx.psi(x, 1.0, kap);
                    (p * q, ap * q + p * aq)
                }
            };
            (c * p, c * ap)
        }
        Kind::F0F => {
            let (p, ap) = ctx.psi(x, m, kap);
            let (q, aq) = ctx.psi(x, 1.0, kap);
            (p * q, ap * q + p * aq)
        }
    }
}

fn bound_kind(ctx: &FunctionContext, kind: Kind, tr: Truncation) -> Option<f64> {
    let m = ctx.moment_order();
    let kap = tr.residual;
    match kind {
        Kind::Const(c) => Some(c.abs()),
        Kind::Psi { n } => ctx.psi_bound(n, kap),
        Kind::H { k } => ctx.h_bound(k, kap),
        Kind::Fkn { k, n } => {
            let kq = tr.queue?;
            let hb = ctx.h_bound(k, kap)?;
            Some(ctx.rk(k, n - 1.0) * (big_g_sup(n, kq) + g_sup(n, kq) * hb))
        }
        Kind::FknD { k, n } => {
            Some(ctx.rk(k, n) * queue_power_sup(n, tr.queue)? * ctx.psi_bound(1.0, kap)?)
        }
        Kind::FknE { k, n } => Some(
            ctx.rk(k, n) * queue_power_sup(n, tr.queue)? * ctx.psi_bound(m - n + 1.0, kap)?,
        ),
        Kind::FknF { k, n } => Some(
            ctx.rk(k, n)
                * queue_power_sup(n, tr.queue)?
                * ctx.psi_bound(m - n, kap)?
                * ctx.psi_bound(1.0, kap)?,
        ),
        Kind::F0F => Some(ctx.psi_bound(m, kap)? * ctx.psi_bound(1.0, kap)?),
    }
}

/// Degree in elapsed time along a segment, between breakpoints.
fn degree_kind(ctx: &FunctionContext, kind: Kind) -> Option<u32> {
    let m = ctx.moment_order();
    match kind {
        Kind::Const(_) => Some(0),
        Kind::Psi { n } => integer_degree(n),
        Kind::H { .. } | Kind::Fkn { .. } | Kind::FknD { .. } => Some(1),
        Kind::FknE { n, .. } => integer_degree(m - n + 1.0),
        Kind::FknF { n, .. } => integer_degree(m - n).map(|d| d + 1),
        Kind::F0F => integer_degree(m).map(|d| d + 1),
    }
}

impl Expr {
    fn eval(&self, ctx: &FunctionContext, x: &SimState) -> (f64, f64) {
        match self {
            Expr::Leaf(kind, tr) => eval_kind(ctx, *kind, *tr, x),
            Expr::Sum(items) => items.iter().fold((0.0, 0.0), |(v, a), e| {
                let (ev, ea) = e.eval(ctx, x);
                (v + ev, a + ea)
            }),
            Expr::Product(items) => items.iter().fold((1.0, 0.0), |(v, a), e| {
                let (ev, ea) = e.eval(ctx, x);
                (v * ev, a * ev + v * ea)
            }),
        }
    }

    fn bound(&self, ctx: &FunctionContext) -> Option<f64> {
        match self {
            Expr::Leaf(kind, tr) => bound_kind(ctx, *kind, *tr),
            Expr::Sum(items) => items.iter().map(|e| e.bound(ctx)).sum(),
            Expr::Product(items) => items.iter().map(|e| e.bound(ctx)).product(),
        }
    }

    fn degree(&self, ctx: &FunctionContext) -> Option<u32> {
        match self {
            Expr::Leaf(kind, _) => degree_kind(ctx, *kind),
            Expr::Sum(items) => items
                .iter()
                .map(|e| e.degree(ctx))
                .try_fold(0, |acc, d| d.map(|d| acc.max(d))),
            Expr::Product(items) => items.iter().map(|e| e.degree(ctx)).sum(),
        }
    }

    fn residual_kappas(&self, out: &mut Vec<f64>) {
        match self {
            Expr::Leaf(Kind::Const(_), _) => {}
            Expr::Leaf(_, tr) => out.extend(tr.residual),
            Expr::Sum(items) | Expr::Product(items) => {
                items.iter().for_each(|e| e.residual_kappas(out))
            }
        }
    }

    fn fmt_with(&self, f: &mut fmt::Formatter<'_>, parent_product: bool) -> fmt::Result {
        match self {
            Expr::Leaf(kind, tr) => fmt_leaf(f, *kind, *tr),
            Expr::Sum(items) => {
                if parent_product {
                    write!(f, "(")?;
                }
                for (i, e) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    e.fmt_with(f, false)?;
                }
                if parent_product {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Expr::Product(items) => {
                for (i, e) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " * ")?;
                    }
                    e.fmt_with(f, true)?;
                }
                Ok(())
            }
        }
    }
}

fn fmt_kappa(v: Option<f64>) -> String {
    match v {
        Some(k) => format!("{k}"),
        None => "inf".into(),
    }
}

fn fmt_leaf(f: &mut fmt::Formatter<'_>, kind: Kind, tr: Truncation) -> fmt::Result {
    let kap = fmt_kappa(tr.residual);
    let q = fmt_kappa(tr.queue);
    match kind {
        Kind::Const(c) => write!(f, "{c}"),
        Kind::Psi { n } => write!(f, "psi(n={n},kappa={kap})"),
        Kind::H { k } => write!(f, "h(k={k},kappa={kap})"),
        Kind::Fkn { k, n } => write!(f, "fkn(k={k},n={n},kappa={kap},qkappa={q})"),
        Kind::FknD { k, n } => write!(f, "fknD(k={k},n={n},kappa={kap},qkappa={q})"),
        Kind::FknE { k, n } => write!(f, "fknE(k={k},n={n},kappa={kap},qkappa={q})"),
        Kind::FknF { k, n } => write!(f, "fknF(k={k},n={n},kappa={kap},qkappa={q})"),
        Kind::F0F => write!(f, "f0F(kappa={kap})"),
    }
}

fn check_level(ctx: &FunctionContext, level: Option<f64>, residual: bool) -> Result<(), TestFunctionError> {
    if let Some(k) = level {
        if !(k > 0.0 && k.is_finite()) {
            return Err(TestFunctionError::Kappa(k));
        }
        if residual && ctx.lies_on_atom(k) {
            return Err(TestFunctionError::KappaOnAtom(k));
        }
    }
    Ok(())
}

fn check_exponent(n: f64, what: &'static str) -> Result<(), TestFunctionError> {
    if n >= 0.0 && n.is_finite() {
        Ok(())
    } else {
        Err(TestFunctionError::Exponent { what, value: n })
    }
}

impl TestFunction {
    /// Validates and wraps one family member.
    pub fn leaf(ctx: &Arc<FunctionContext>, kind: Kind, tr: Truncation) -> Result<Self, TestFunctionError> {
        check_level(ctx, tr.residual, true)?;
        check_level(ctx, tr.queue, false)?;
        let m = ctx.moment_order();
        let check_k = |k: usize, max: usize| {
            if k >= 1 && k <= max {
                Ok(())
            } else {
                Err(TestFunctionError::Station { k, max })
            }
        };
        match kind {
            Kind::Const(c) if !c.is_finite() => return Err(TestFunctionError::Exponent { what: "constant", value: c }),
            Kind::Const(_) | Kind::F0F => {}
            Kind::Psi { n } => check_exponent(n, "n")?,
            Kind::H { k } => check_k(k, ctx.stations())?,
            Kind::Fkn { k, n } | Kind::FknD { k, n } => {
                check_k(k, ctx.covered())?;
                check_exponent(n, "n")?;
            }
            Kind::FknE { k, n } => {
                check_k(k, ctx.covered())?;
                check_exponent(n, "n")?;
                check_exponent(m - n + 1.0, "M - n + 1")?;
            }
            Kind::FknF { k, n } => {
                check_k(k, ctx.covered())?;
                check_exponent(n, "n")?;
                check_exponent(m - n, "M - n")?;
            }
        }
        Ok(Self {
            ctx: Arc::clone(ctx),
            expr: Expr::Leaf(kind, tr),
        })
    }

    pub fn constant(ctx: &Arc<FunctionContext>, c: f64) -> Result<Self, TestFunctionError> {
        Self::leaf(ctx, Kind::Const(c), Truncation::NONE)
    }

    pub fn psi(ctx: &Arc<FunctionContext>, n: f64, kappa: Option<f64>) -> Result<Self, TestFunctionError> {
        Self::leaf(
            ctx,
            Kind::Psi { n },
            Truncation {
                residual: kappa,
                queue: None,
            },
        )
    }

    pub fn h(ctx: &Arc<FunctionContext>, k: usize, kappa: Option<f64>) -> Result<Self, TestFunctionError> {
        Self::leaf(
            ctx,
            Kind::H { k },
            Truncation {
                residual: kappa,
                queue: None,
            },
        )
    }

    pub fn context(&self) -> &Arc<FunctionContext> {
        &self.ctx
    }

    /// The single family member, if this is not a composite.
    pub fn kind(&self) -> Option<(Kind, Truncation)> {
        match &self.expr {
            Expr::Leaf(k, t) => Some((*k, *t)),
            _ => None,
        }
    }

    fn combine(self, other: Self, product: bool) -> Result<Self, TestFunctionError> {
        if !Arc::ptr_eq(&self.ctx, &other.ctx) && *self.ctx != *other.ctx {
            return Err(TestFunctionError::ContextMismatch);
        }
        let flatten = |e: Expr| match e {
            Expr::Sum(v) if !product => v,
            Expr::Product(v) if product => v,
            e => vec![e],
        };
        let mut items = flatten(self.expr);
        items.extend(flatten(other.expr));
        let expr = if product {
            Expr::Product(items)
        } else {
            Expr::Sum(items)
        };
        Ok(Self { ctx: self.ctx, expr })
    }

    pub fn plus(self, other: Self) -> Result<Self, TestFunctionError> {
        self.combine(other, false)
    }

    pub fn times(self, other: Self) -> Result<Self, TestFunctionError> {
        self.combine(other, true)
    }

    pub fn evaluate(&self, x: &SimState) -> f64 {
        self.expr.eval(&self.ctx, x).0
    }

    /// `A f(x) = -sum d f/d r_e - sum d f/d r_s 1{z > 0}`.
    pub fn interior(&self, x: &SimState) -> f64 {
        self.expr.eval(&self.ctx, x).1
    }

    pub fn value_and_interior(&self, x: &SimState) -> (f64, f64) {
        self.expr.eval(&self.ctx, x)
    }

    /// `f(post) - f(pre)` across a recorded jump.
    pub fn jump_difference(&self, rec: &JumpRecord) -> f64 {
        self.jump_between(&rec.pre, &rec.post())
    }

    pub fn jump_between(&self, pre: &SimState, post: &SimState) -> f64 {
        self.evaluate(post) - self.evaluate(pre)
    }

    /// `sup |f|` for truncated functions; `None` when unbounded.
    pub fn bound(&self) -> Option<f64> {
        self.expr.bound(&self.ctx)
    }

    pub fn is_bounded(&self) -> bool {
        self.bound().is_some()
    }

    /// Polynomial degree of `t -> f(x(t))` between breakpoints, `None` when
    /// not polynomial (non-integer exponents).
    pub fn value_degree(&self) -> Option<u32> {
        self.expr.degree(&self.ctx)
    }

    pub fn interior_degree(&self) -> Option<u32> {
        self.value_degree().map(|d| d.saturating_sub(1))
    }

    /// Offsets in `(0, dt)` where a running residual crosses a truncation
    /// level.
    pub fn push_breakpoints(&self, x: &SimState, dt: f64, out: &mut Vec<f64>) {
        let mut levels = Vec::new();
        self.expr.residual_kappas(&mut levels);
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        for kap in levels {
            let mut push = |v: f64| {
                let s = v - kap;
                if s > 0.0 && s < dt {
                    out.push(s);
                }
            };
            for &j in self.ctx.arrival_stations() {
                push(x.re[j]);
            }
            for j in 0..x.stations() {
                if x.z[j] > 0 {
                    push(x.rs[j]);
                }
            }
        }
    }

    /// `-A f` as a time-integral functional.
    pub fn neg_interior(&self) -> NegInterior {
        NegInterior(self.clone())
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt_with(f, false)
    }
}

fn rule_for(d: Option<u32>) -> SegmentRule {
    match d {
        Some(d) => SegmentRule::Polynomial(d),
        None => SegmentRule::NonPolynomial,
    }
}

impl Functional for TestFunction {
    fn label(&self) -> String {
        self.to_string()
    }

    fn rule(&self) -> SegmentRule {
        rule_for(self.value_degree())
    }

    fn value(&self, x: &SimState) -> f64 {
        self.evaluate(x)
    }

    fn breakpoints(&self, x: &SimState, dt: f64, out: &mut Vec<f64>) {
        self.push_breakpoints(x, dt, out)
    }
}

/// `-A f` for a wrapped test function.
#[derive(Debug, Clone)]
pub struct NegInterior(pub TestFunction);

impl Functional for NegInterior {
    fn label(&self) -> String {
        format!("-A[{}]", self.0)
    }

    fn rule(&self) -> SegmentRule {
        rule_for(self.0.interior_degree())
    }

    fn value(&self, x: &SimState) -> f64 {
        -self.0.interior(x)
    }

    fn breakpoints(&self, x: &SimState, dt: f64, out: &mut Vec<f64>) {
        self.0.push_breakpoints(x, dt, out)
    }
}
