//! Test functions for the basic adjoint relationship: `psi_n`, `h_k`,
//! `f_{k,n}` and its `D`, `E`, `F` companions, `f_{0,F}`, their truncations
//! and the soft kernels `g`, `G`.

mod context;
mod function;
pub mod kernels;
mod selector;

use thiserror::Error;

pub use context::{nudge_off, FunctionContext, DEFAULT_KAPPA_QUANTILE};
pub use function::{Kind, NegInterior, TestFunction, Truncation};
pub use kernels::{check_kernels, random_kernel_tuples, KernelCheckReport, KernelTuple};
pub use selector::{parse_selector, Call, Factor, Selector, SelectorError, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TestFunctionError {
    #[error("k = {k} outside 1..={max}")]
    Station { k: usize, max: usize },
    #[error("{what} = {value} must be finite and nonnegative")]
    Exponent { what: &'static str, value: f64 },
    #[error("truncation level {0} must be positive and finite")]
    Kappa(f64),
    #[error("truncation level {0} coincides with an attainable deterministic residual")]
    KappaOnAtom(f64),
    #[error("moment order {0} must be finite and nonnegative")]
    MomentOrder(f64),
    #[error("routing matrix is singular")]
    Singular,
    #[error("cannot combine test functions built for different networks")]
    ContextMismatch,
}

/// Every truncated family member at the default levels: `psi_n` for
/// integer `n` in `1..=M`, `f_{0,F}`, `h_k` for each station, and
/// `f_{k,n}` with its `D`, `E`, `F` companions for each covered `k` and
/// integer `n` in `0..=M`.
pub fn truncated_family(ctx: &std::sync::Arc<FunctionContext>) -> Result<Vec<TestFunction>, TestFunctionError> {
    let kap = ctx.default_kappa();
    let top = ctx.moment_order().floor() as u32;
    let mut out = Vec::new();
    for n in 1..=top {
        out.push(TestFunction::psi(ctx, f64::from(n), Some(kap))?);
    }
    out.push(TestFunction::leaf(ctx, Kind::F0F, Truncation::residual(kap))?);
    for k in 1..=ctx.stations() {
        out.push(TestFunction::h(ctx, k, Some(kap))?);
    }
    for k in 1..=ctx.covered() {
        let tr = Truncation::both(kap, ctx.default_queue_kappa(k, kap));
        for n in 0..=top {
            let n = f64::from(n);
            for kind in [
                Kind::Fkn { k, n },
                Kind::FknD { k, n },
                Kind::FknE { k, n },
                Kind::FknF { k, n },
            ] {
                out.push(TestFunction::leaf(ctx, kind, tr)?);
            }
        }
    }
    Ok(out)
}
