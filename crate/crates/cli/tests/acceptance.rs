//! Acceptance suite: one PASS/FAIL line per criterion.

use std::fs;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use chrono::Utc;
use clap::Parser;
use gjn_cli::args::{self, Cli};
use gjn_cli::commands::{product_form, routing, simulate, sweep};
use gjn_cli::output::RunDir;
use gjn_cli::{load_spec, Global};
use gjn_core::bar::{estimate_statements_many, verify_bar_many, Replicated, StatementRequest};
use gjn_core::sim::{run, EventKind, FunctionalSet, IndependenceObserver, RunConfig};
use gjn_core::testfn::{check_kernels, random_kernel_tuples, truncated_family, FunctionContext};
use gjn_core::{corpus, RoutingMatrix, ScaledNetwork, SimRng};
use rand::{Rng, SeedableRng};

type Verdict = Result<String, String>;

fn global(source: &str, seed: u64) -> Global {
    Global {
        spec: Arc::new(load_spec(source).unwrap()),
        source: source.into(),
        seed,
        jobs: 0,
    }
}

fn command(argv: &[&str]) -> args::Command {
    let mut full = vec!["gjn"];
    full.extend_from_slice(argv);
    Cli::parse_from(full).command
}

fn scaled(name: &str, r: f64) -> ScaledNetwork {
    ScaledNetwork::new(Arc::new(corpus::by_name(name).unwrap()), r).unwrap()
}

fn json_f64(v: &serde_json::Value) -> f64 {
    v.as_str().expect("decimal string").parse().expect("decimal")
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// `analyze` on the tandem: exact rationals and the drift identity within
/// 1e-10, each invocation under one second.
fn static_exactness() -> Verdict {
    let root = tempfile::tempdir().unwrap();
    let mut slowest: f64 = 0.0;
    let mut reports = Vec::new();
    for exact in [true, false] {
        let mut argv = vec!["--spec", "corpus:tandem", "analyze", "--r", "0.5", "--r", "0.1", "--r", "0.01"];
        if exact {
            argv.push("--exact");
        }
        let t = Instant::now();
        let out = Command::new(env!("CARGO_BIN_EXE_gjn"))
            .arg("--out")
            .arg(root.path())
            .args(&argv)
            .output()
            .unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        if !out.status.success() {
            return Err(String::from_utf8_lossy(&out.stderr).into_owned());
        }
        let dir = String::from_utf8_lossy(&out.stdout).lines().last().unwrap().to_string();
        let report: serde_json::Value = serde_json::from_slice(&fs::read(format!("{dir}/report.json")).unwrap()).unwrap();
        reports.push(report);
    }
    let mut bad = Vec::new();
    for s in reports[0]["scales"].as_array().unwrap() {
        let expect = [
            ("lambda", serde_json::json!(["1", "1"])),
            ("w", serde_json::json!([["0", "1"], ["0", "0"]])),
            ("r0", serde_json::json!({"raw": "1", "clamped": "1"})),
        ];
        for (k, v) in expect {
            if s[k] != v {
                bad.push(format!("{k} = {}", s[k]));
            }
        }
        if s["u"][1] != serde_json::json!(["1", "1"]) {
            bad.push(format!("u_2 = {}", s["u"][1]));
        }
        for d in s["drift"].as_array().unwrap() {
            if d["identity_gap"] != "0" {
                bad.push(format!("exact gap {} at r = {}", d["identity_gap"], s["r"]));
            }
        }
    }
    let mut worst: f64 = 0.0;
    for s in reports[1]["scales"].as_array().unwrap() {
        for d in s["drift"].as_array().unwrap() {
            worst = worst.max(json_f64(&d["identity_gap"]));
        }
    }
    check(
        bad.is_empty() && worst <= 1e-10 && slowest < 1.0,
        format!("{bad:?}, float drift gap {worst:e}, slowest run {slowest:.3} s"),
    )
}

/// 20 random open networks, 1e5 paths per entry, every |z| <= 4.
fn routing_oracle() -> Verdict {
    let t = Instant::now();
    let mut rng = SimRng::seed_from_u64(20);
    let (mut entries, mut worst, mut failures) = (0, 0.0f64, 0);
    for net in 0..20u64 {
        let n = rng.random_range(2..=6);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..n)
                    .map(|_| if rng.random_bool(0.6) { rng.random_range(0.05..1.0) } else { 0.0 })
                    .collect();
                let total: f64 = raw.iter().sum();
                let mass = rng.random_range(0.3..0.95);
                raw.iter().map(|v| if total > 0.0 { v * mass / total } else { 0.0 }).collect()
            })
            .collect();
        let p = RoutingMatrix::new(rows).unwrap();
        for row in routing::compare(&p, 100_000, 1000 + net).unwrap() {
            entries += 1;
            worst = worst.max(row.z_score.abs());
            if !row.passes(4.0) {
                failures += 1;
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        failures == 0 && secs < 60.0,
        format!("{entries} entries, max |z| = {worst:.2}, {failures} beyond 4, {secs:.1} s"),
    )
}

/// M/M/1: `r E[Z]` covers 1 and `E[(rZ)^2]` covers `2 + r` at 99%.
fn mm1_moments() -> Verdict {
    let g = global("corpus:mm1", 3);
    let mut parts = Vec::new();
    let mut ok = true;
    for r in ["0.3", "0.1", "0.05"] {
        let rv: f64 = r.parse().unwrap();
        let horizon = (1e6 * 0.3 / rv).to_string();
        let a = match command(&["simulate", "--r", r, "--horizon", &horizon, "--confidence", "0.99"]) {
            args::Command::Simulate(a) => a,
            _ => unreachable!(),
        };
        let (_, _, out) = simulate::estimate(&g, &a).unwrap();
        let m1 = out.integrals.time_average(0, 0.99);
        let m2 = out.integrals.time_average(1, 0.99);
        ok &= m1.covers(1.0) && m2.covers(2.0 + rv);
        parts.push(format!(
            "r={r}: {:.4}+-{:.4} vs 1, {:.4}+-{:.4} vs {}",
            m1.mean,
            m1.half_width,
            m2.mean,
            m2.half_width,
            2.0 + rv
        ));
    }
    check(ok, parts.join("; "))
}

/// Jackson tandem at r = 0.1: `E[r^j Z_j]` covers 1 and the marginal fit
/// has p > 0.001 at both stations.
fn jackson_product_form() -> Verdict {
    let g = global("corpus:jackson-tandem", 1);
    let a = match command(&["product-form", "--r", "0.1", "--reps", "4"]) {
        args::Command::ProductForm(a) => a,
        _ => unreachable!(),
    };
    let (exact, fits) = product_form::run_command(&g, &a).unwrap();
    let parts: Vec<String> = fits
        .iter()
        .map(|f| {
            format!(
                "station {}: {:.4}+-{:.4}, p = {:.4}",
                f.station,
                f.mean.mean,
                f.mean.half_width,
                f.fit.as_ref().map_or(f64::NAN, |h| h.p_value)
            )
        })
        .collect();
    check(exact && fits.iter().all(|f| f.passes(0.001)), parts.join("; "))
}

/// Every truncated family member on the four-network corpus at
/// r = 0.3 and 0.1 over 5 seeds; at least 95% of cells within 3 half-widths.
fn bar_suite() -> Verdict {
    let (mut cells, mut passed, mut worst) = (0usize, 0usize, 0.0f64);
    for (name, spec) in corpus::standard() {
        let spec = Arc::new(spec);
        for r in [0.3, 0.1] {
            let net = ScaledNetwork::new(spec.clone(), r).unwrap();
            let ctx = FunctionContext::new(net.clone()).unwrap();
            let fs = truncated_family(&ctx).unwrap();
            for seed in 1..=5 {
                let plan = Replicated::new(RunConfig::new(2e5, seed), 1);
                for rep in verify_bar_many(&net, &fs, &plan).unwrap() {
                    cells += 1;
                    if rep.passes() {
                        passed += 1;
                    }
                    let hw = rep.residual.half_width;
                    if hw > 0.0 {
                        worst = worst.max(rep.residual.mean.abs() / hw);
                    }
                }
            }
            eprintln!("  bar suite: {name} r={r} done");
        }
    }
    let rate = passed as f64 / cells as f64;
    check(
        rate >= 0.95,
        format!("{passed}/{cells} cells pass ({:.1}%), worst |residual|/half-width {worst:.3}", 100.0 * rate),
    )
}

/// Kernel inequalities on 1e5 random tuples with no violation beyond the
/// 1e-12 slack.
fn kernel_properties() -> Verdict {
    let mut rng = SimRng::seed_from_u64(6);
    let rep = check_kernels(&random_kernel_tuples(&mut rng, 100_000));
    check(
        rep.tuples == 100_000 && rep.passed(),
        format!("{} tuples, violations {:?}, worst {:?}", rep.tuples, rep.violations, rep.worst),
    )
}

/// S1(k, n = 2) over r in {0.3, 0.2, 0.1, 0.05} on the hyperexponential
/// tandem and feedback networks: max/min <= 5, no increasing trend at 0.01.
fn uniform_boundedness() -> Verdict {
    let t = Instant::now();
    let root = tempfile::tempdir().unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ["hyperexponential-tandem", "hyperexponential-feedback"] {
        let g = global(&format!("corpus:{name}"), 7);
        let a = match command(&["sweep", "--r", "0.3,0.2,0.1,0.05", "--k", "1,2", "--n", "2", "--reps", "4"]) {
            args::Command::Sweep(a) => a,
            _ => unreachable!(),
        };
        let dir = RunDir::new(root.path(), &g.spec.hash(), "sweep", Utc::now());
        let art = sweep::run(&g, &a, &dir).unwrap();
        for s in art.report["summary"].as_array().unwrap() {
            let ratio = json_f64(&s["ratio"]);
            let p = json_f64(&s["mann_kendall"]["p_increasing"]);
            ok &= ratio <= 5.0 && p >= 0.01;
            parts.push(format!("{name} k={}: ratio {ratio:.3}, MK p {p:.3}", s["k"]));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ok &= secs <= 3600.0;
    parts.push(format!("{secs:.0} s"));
    check(ok, parts.join("; "))
}

/// Event rates within 4 SE of `alpha_j` and `lambda_j`, and pre-jump
/// independence correlations within 4 SE of zero, on every corpus network.
fn palm_diagnostics() -> Verdict {
    let (mut rates, mut corrs, mut bad) = (0, 0, Vec::new());
    for name in corpus::NAMES {
        let net = scaled(name, 0.3);
        let has: Vec<bool> = (0..net.stations()).map(|j| net.alpha()[j] > 0.0).collect();
        let mut obs = IndependenceObserver::new(net.stations(), &has);
        let out = run(&net, &RunConfig::new(1e5, 8), &FunctionalSet::new(), &mut [&mut obs]).unwrap();
        for j in 0..net.stations() {
            let mut kinds = vec![(EventKind::ServiceCompletion(j), net.lambda()[j])];
            if has[j] {
                kinds.push((EventKind::ExternalArrival(j), net.alpha()[j]));
            } else if out.palm.count(EventKind::ExternalArrival(j)) != 0 {
                bad.push(format!("{name}: arrivals at station {}", j + 1));
            }
            for (kind, rate) in kinds {
                rates += 1;
                let z = out.palm.rate_summary(kind, 0.95).z_score(rate);
                if z > 4.0 {
                    bad.push(format!("{name} {} rate z = {z:.2}", kind.label()));
                }
            }
        }
        for c in obs.checks() {
            corrs += 1;
            if !c.passes(4.0) {
                bad.push(format!("{name}: {c:?}"));
            }
        }
    }
    check(bad.is_empty(), format!("{rates} rates, {corrs} correlations, failures {bad:?}"))
}

/// Statements with n = beta - 1, beta = M + eps/(M + eps), eps = 0.5, M = 2
/// finish with finite estimates on every corpus network.
fn fractional_statements() -> Verdict {
    let mut bad = Vec::new();
    let mut count = 0;
    for name in corpus::NAMES {
        let net = scaled(name, 0.3);
        let m = net.spec().moment_order();
        let top = (m + 0.5 / (m + 0.5)).floor() as usize;
        let reqs: Vec<StatementRequest> = (1..=top.min(net.stations()))
            .map(|k| StatementRequest::fractional(k, m, 0.5))
            .collect();
        let plan = Replicated::new(RunConfig::new(2e4, 9), 1);
        for e in estimate_statements_many(&net, &reqs, &plan).unwrap() {
            count += 1;
            if !e.is_finite() {
                bad.push(format!("{name} k={}", e.request.k));
            }
        }
    }
    check(bad.is_empty(), format!("{count} requests, non-finite {bad:?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("static exactness", static_exactness),
        ("routing oracle", routing_oracle),
        ("M/M/1 moments", mm1_moments),
        ("Jackson product form", jackson_product_form),
        ("BAR residual suite", bar_suite),
        ("kernel properties", kernel_properties),
        ("uniform boundedness", uniform_boundedness),
        ("Palm diagnostics", palm_diagnostics),
        ("non-integer exponents", fractional_statements),
    ];
    // Numeric arguments select criteria; anything else is ignored.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let verdict = f();
        let secs = t.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("PASS criterion {} {name}: {d} [{secs:.1} s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {} {name}: {d} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {}/{ran} criteria pass", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
