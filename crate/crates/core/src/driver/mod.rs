//! Experiment orchestration: configuration, synthetic data, the inversion
//! loop, built-in verification checks and method comparison.

pub mod compare;
pub mod config;
pub mod experiment;
pub mod run;
pub mod verify;

pub use compare::{compare, CompareOutput};
pub use config::{BoundaryKind, Damping, Experiment, InversionConfig};
pub use experiment::{load_data, synthesize, synthesize_data, ExperimentSetup};
pub use run::{invert, Inversion, InversionResult, IterationRecord};
pub use verify::{verify, Check, Measurement, VerificationReport};
