//! Robust distributed average consensus over noisy channels.
//!
//! Nodes on an undirected graph hold scalar measurements of a common
//! parameter and exchange values through a transmit map `h` over channels
//! that add independent, possibly heavy-tailed noise. Each receiver passes
//! the observed difference through a bounded odd map `f` and takes a
//! decreasing step. The crate provides the recursion, Monte-Carlo ensembles
//! and the closed-form asymptotic predictions to compare them against.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod engine;
pub mod ensemble;
pub mod error;
pub mod graph;
pub mod maps;
pub mod noise;
pub mod output;
pub mod presets;
pub mod quadrature;
pub mod rng;

pub use analysis::{analyze, AnalyticReport, CovarianceForm, CovarianceModel};
pub use config::{Experiment, ExperimentConfig};
pub use engine::{run_trial, CheckpointPlan, RcSystem, SensingConfig, StepSchedule, TrialTrajectory};
pub use ensemble::{compare_empirical_analytic, ensemble_stats, run_ensemble, EnsembleSpec, EnsembleStats, InitialMode};
pub use error::{Error, Result};
pub use graph::{build_named, build_random, Family, Graph, RandomModel, Spectrum, Topology};
pub use maps::{ReceiveMap, ReceiveShape, TransmitMap};
pub use noise::{functionals, McSettings, NoiseFunctionals, NoiseModel};
