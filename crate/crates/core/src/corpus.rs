//! Standard networks used by the verification suites.

use crate::distribution::DistributionSpec as D;
use crate::network::NetworkSpec;

fn build(b: crate::network::NetworkBuilder) -> NetworkSpec {
    b.build().expect("corpus network is valid")
}

/// Single station, exponential arrivals and services.
pub fn mm1() -> NetworkSpec {
    build(
        NetworkSpec::builder(&[1.0], &[vec![0.0]])
            .arrival(0, D::Exponential)
            .service(0, D::Exponential)
            .moment_order(2.0),
    )
}

/// Two stations in series; Erlang-2 arrivals, uniform then deterministic
/// services.
pub fn tandem() -> NetworkSpec {
    build(
        NetworkSpec::builder(&[1.0, 0.0], &[vec![0.0, 1.0], vec![0.0, 0.0]])
            .arrival(0, D::erlang(2))
            .service(0, D::Uniform01x2)
            .service(1, D::Deterministic)
            .moment_order(2.0),
    )
}

/// Station 2 feeds back to station 1 with probability 0.8; `lambda = (1, 1)`.
pub fn feedback_to_front() -> NetworkSpec {
    build(
        NetworkSpec::builder(&[0.2, 1.0], &[vec![0.0, 0.0], vec![0.8, 0.0]])
            .arrival(0, D::Exponential)
            .arrival(1, D::Exponential)
            .service(0, D::hyperexponential(0.5, 4.0))
            .service(1, D::lognormal(0.5))
            .moment_order(2.0),
    )
}

/// Three stations with dense substochastic routing and mixed laws.
pub fn random3() -> NetworkSpec {
    build(
        NetworkSpec::builder(
            &[0.5, 0.3, 0.2],
            &[vec![0.0, 0.4, 0.3], vec![0.2, 0.0, 0.5], vec![0.1, 0.3, 0.0]],
        )
        .arrival(0, D::Exponential)
        .arrival(1, D::Deterministic)
        .arrival(2, D::erlang(3))
        .service(0, D::Exponential)
        .service(1, D::erlang(2))
        .service(2, D::hyperexponential(0.5, 4.0))
        .moment_order(2.0),
    )
}

/// Exponential tandem; its stationary queue lengths are independent
/// geometrics.
pub fn jackson_tandem() -> NetworkSpec {
    build(
        NetworkSpec::builder(&[1.0, 0.0], &[vec![0.0, 1.0], vec![0.0, 0.0]])
            .arrival(0, D::Exponential)
            .all_services(D::Exponential)
            .moment_order(2.0),
    )
}

/// Exponential tandem with hyperexponential services, for Palm
/// independence checks.
pub fn hyperexponential_tandem() -> NetworkSpec {
    build(
        NetworkSpec::builder(&[1.0, 0.0], &[vec![0.0, 1.0], vec![0.0, 0.0]])
            .arrival(0, D::Exponential)
            .all_services(D::hyperexponential(0.5, 4.0))
            .moment_order(2.0),
    )
}

/// Feedback-to-front routing with hyperexponential services at both
/// stations.
pub fn hyperexponential_feedback() -> NetworkSpec {
    build(
        NetworkSpec::builder(&[0.2, 1.0], &[vec![0.0, 0.0], vec![0.8, 0.0]])
            .arrival(0, D::Exponential)
            .arrival(1, D::Exponential)
            .all_services(D::hyperexponential(0.5, 4.0))
            .moment_order(2.0),
    )
}

/// The four networks of the BAR and uniform-boundedness suites.
pub fn standard() -> Vec<(&'static str, NetworkSpec)> {
    vec![
        ("mm1", mm1()),
        ("tandem", tandem()),
        ("feedback-to-front", feedback_to_front()),
        ("random3", random3()),
    ]
}

pub fn by_name(name: &str) -> Option<NetworkSpec> {
    match name {
        "mm1" => Some(mm1()),
        "tandem" => Some(tandem()),
        "feedback-to-front" => Some(feedback_to_front()),
        "random3" => Some(random3()),
        "jackson-tandem" => Some(jackson_tandem()),
        "hyperexponential-tandem" => Some(hyperexponential_tandem()),
        "hyperexponential-feedback" => Some(hyperexponential_feedback()),
        _ => None,
    }
}

pub const NAMES: [&str; 7] = [
    "mm1",
    "tandem",
    "feedback-to-front",
    "random3",
    "jackson-tandem",
    "hyperexponential-tandem",
    "hyperexponential-feedback",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feedback_traffic() {
        let s = feedback_to_front();
        for l in s.lambda() {
            assert!((l - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn names_resolve_and_round_trip() {
        for name in NAMES {
            let s = by_name(name).unwrap();
            assert_eq!(NetworkSpec::from_json(&s.to_json()).unwrap(), s);
        }
        assert!(by_name("nope").is_none());
    }
}
