//! Branching Brownian motion with drift `-1`, absorbed at the origin, near
//! criticality: simulation, survival-time prediction, heat-kernel
//! oracles, the limiting continuous-state branching process and
//! statistical helpers for comparing them.

pub mod csbp;
pub mod error;
pub mod heatkernel;
pub mod model;
pub mod predictor;
pub mod quadrature;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
pub use model::{CriticalCurve, OffspringLaw, ParticleConfiguration};
pub use simulator::{run, run_batch, Barrier, Extinction, RunResult, SimConfig};
