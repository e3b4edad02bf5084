//! Generalized Jackson networks in multi-scale heavy traffic: static
//! analysis, discrete-event simulation, test functions and numerical checks
//! of the basic adjoint relationship.

pub mod analysis;
pub mod bar;
pub mod corpus;
pub mod decimal;
pub mod distribution;
pub mod linalg;
pub mod network;
pub mod scalar;
pub mod sim;
pub mod stats;
pub mod testfn;

pub use num_rational::BigRational;

pub use analysis::{CriticalScale, DriftMargin, HeavyTrafficProfile, StaticReport, WMatrix};
pub use decimal::Decimal;
pub use distribution::{DistributionSpec, SimRng};
pub use network::{NetworkSpec, RoutingMatrix, ScaledNetwork, SpecError};
pub use scalar::Scalar;

pub type Traffic = analysis::TrafficSolution<f64>;
pub type ExactTraffic = analysis::TrafficSolution<BigRational>;
pub type W = WMatrix<f64>;
pub type ExactW = WMatrix<BigRational>;
pub type Profile = HeavyTrafficProfile<f64>;
pub type ExactProfile = HeavyTrafficProfile<BigRational>;
pub type Report = StaticReport<f64>;
pub type ExactReport = StaticReport<BigRational>;
