//! Simulation and verification toolkit for randomized distributed coordinate
//! descent where every exchanged partial derivative passes through a uniform
//! quantizer.
//!
//! The crate is organised bottom-up:
//!
//! * [`objective`] – least-squares objectives with exact smoothness and
//!   strong-convexity constants.
//! * [`quantizer`] – the mid-tread uniform quantizer used on the channel.
//! * [`engine`] – the seeded coordinate descent loop and its trajectories.
//! * [`bounds`] – closed-form convergence constants and iteration bounds.
//! * [`data`] – CSV ingestion, normalization and synthetic instances.
//! * [`montecarlo`] – replicated runs checking the probabilistic guarantee.

pub mod bounds;
pub mod data;
pub mod engine;
pub mod linalg;
pub mod montecarlo;
pub mod objective;
pub mod quantizer;

pub use bounds::{BoundsError, TheoryInputs, TheoryReport};
pub use data::{DataError, Dataset, SyntheticProblem};
pub use engine::{EngineError, IterationRecord, RunConfig, Termination, Trajectory};
pub use montecarlo::{MonteCarloError, MonteCarloSummary};
pub use objective::{ObjectiveError, QuadraticObjective};
pub use quantizer::{Quantizer, QuantizerError};

/// Dense column-major matrix used throughout.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense column vector used throughout.
pub type Vector = nalgebra::DVector<f64>;
