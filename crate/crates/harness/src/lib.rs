//! Seeded experiment drivers, reports and configuration for the
//! `bbm-core` library, shared by the `bbm` binary and the acceptance tests.

pub mod config;
pub mod experiments;
pub mod json;
pub mod report;
pub mod sampling;

/// Independent seed for one leg of an experiment.
pub fn sub_seed(seed: u64, leg: u64) -> u64 {
    bbm_core::rng::mix(seed, leg.wrapping_add(1 << 48))
}
