use std::sync::Arc;

use gjn_core::corpus;
use gjn_core::network::ScaledNetwork;
use gjn_core::sim::SimState;
use gjn_core::testfn::{
    check_kernels, parse_selector, random_kernel_tuples, truncated_family, FunctionContext,
    TestFunction,
};
use gjn_core::SimRng;
use rand::{Rng, SeedableRng};

fn truncated_members(ctx: &Arc<FunctionContext>) -> Vec<TestFunction> {
    let fs = truncated_family(ctx).unwrap();
    assert_eq!(fs.len(), 3 + ctx.stations() + 12 * ctx.covered());
    fs
}

/// States spread well past the truncation levels, with a mass of empty
/// queues and queues near the soft-truncation maximizers.
fn wild_state(ctx: &FunctionContext, rng: &mut SimRng) -> SimState {
    let j = ctx.stations();
    let kap = ctx.default_kappa();
    let mut x = SimState::empty(j);
    let zmax = 20.0 * ctx.r().powi(-(j as i32)).max(kap);
    for s in 0..j {
        x.z[s] = match rng.random_range(0..4) {
            0 => 0,
            1 => rng.random_range(0..10),
            _ => rng.random_range(0.0..zmax) as u64,
        };
        if ctx.network().alpha()[s] > 0.0 {
            x.re[s] = rng.random_range(0.0..5.0 * kap);
        }
        x.rs[s] = rng.random_range(0.0..5.0 * kap);
    }
    x
}

#[test]
fn truncated_members_never_exceed_their_bound() {
    let mut rng = SimRng::seed_from_u64(2024);
    for (name, spec) in corpus::standard() {
        let ctx = FunctionContext::new(ScaledNetwork::new(Arc::new(spec), 0.3).unwrap()).unwrap();
        let fs = truncated_members(&ctx);
        let bounds: Vec<f64> = fs.iter().map(|f| f.bound().unwrap()).collect();
        let mut worst = vec![0.0f64; fs.len()];
        for _ in 0..1_000_000 {
            let x = wild_state(&ctx, &mut rng);
            for (i, f) in fs.iter().enumerate() {
                let v = f.evaluate(&x).abs();
                worst[i] = worst[i].max(v / bounds[i]);
            }
        }
        for (f, w) in fs.iter().zip(&worst) {
            assert!(*w <= 1.0, "{name}: {f} reached {w} of its bound");
        }
    }
}

#[test]
fn kernel_inequalities_on_random_tuples() {
    let mut rng = SimRng::seed_from_u64(5);
    let rep = check_kernels(&random_kernel_tuples(&mut rng, 100_000));
    assert_eq!(rep.tuples, 100_000);
    assert_eq!(rep.violations, [0, 0, 0], "{rep:?}");
}

#[test]
fn selector_covers_every_family_member() {
    let ctx = FunctionContext::new(ScaledNetwork::new(Arc::new(corpus::random3()), 0.1).unwrap()).unwrap();
    for text in [
        "psi(n=2)",
        "h(k=3)",
        "fkn(k=2,n=1)",
        "fknD(k=1,n=2)",
        "fknE(k=1,n=0)",
        "fknF(k=2,n=2)",
        "f0F",
    ] {
        let f = parse_selector(text, &ctx).unwrap();
        assert!(f.is_bounded(), "{text}");
        assert!(f.value_degree().is_some(), "{text}");
    }
}
