//! Discrete-event simulation of the network's Markov process with exact
//! segment integrals and Palm-event capture.

mod engine;
mod functional;
mod palm;
pub mod quadrature;
mod run;
mod state;

pub use engine::{initial_state, Engine};
pub use functional::{
    power, residual_power_integral, Functional, FunctionalSet, QueueResidualMoment,
    RegistrationError, ResidualTerms, Scratch, SegmentRule, Unit, ADAPTIVE_TOLERANCE,
};
pub use palm::{Coordinate, IndependenceCheck, IndependenceObserver};
pub use run::{
    run, run_replicated, MomentReport, Observer, PalmSampleSet, Provenance, RunConfig, RunError,
    RunOutput, SegmentIntegral,
};
pub use state::{EventKind, JumpRecord, SimState};
