use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid offspring law: {0}")]
    InvalidLaw(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration is extinct")]
    Extinct,

    #[error("invalid simulation config: {0}")]
    SimConfig(String),

    #[error("population blowup at time {time}: {particles} particles after {particle_steps} particle-steps")]
    PopulationBlowup {
        time: f64,
        particles: usize,
        particle_steps: u64,
    },

    #[error("run {index}: {source}")]
    Run {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("empty sample")]
    EmptySample,

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
