//! Tail of the limit `W = lim y e^{-y} K(y)`, where `K(y)` counts the
//! particles of the critical process that reach `-y`. Shifting by `y`, this
//! is the number absorbed at the origin when starting from `y`.

use anyhow::Result;
use bbm_core::simulator::map_runs;
use bbm_core::{Error, OffspringLaw, ParticleConfiguration, SimConfig};
use serde::{Deserialize, Serialize};

use crate::experiments::RunContext;
use crate::report::{Report, Threshold};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E8Config {
    pub schema_version: u32,
    pub seed: u64,
    pub offspring: OffspringLaw,
    pub dt: f64,
    pub levels: Vec<f64>,
    pub n_runs: u64,
    /// Runs alive at the horizon are censored and reported.
    pub horizon: f64,
    pub max_particles: usize,
    pub tail_points: Vec<f64>,
    /// PASS when `|x P(W > x) - 1|` stays below this on every tail point.
    pub tail_tol: f64,
}

pub fn run(cfg: &E8Config, ctx: &RunContext) -> Result<Report> {
    let mut report = Report::new("E8", ctx.seed, cfg)?;
    for (k, &y) in cfg.levels.iter().enumerate() {
        let initial = ParticleConfiguration::single(y)?;
        let sim = SimConfig::new(cfg.dt, crate::sub_seed(ctx.seed, k as u64), cfg.horizon)
            .with_max_particles(cfg.max_particles);
        let outcomes = map_runs(&initial, &sim, &cfg.offspring, 0..cfg.n_runs, ctx.workers, |_, r| {
            match r {
                Ok(run) if run.extinction_time().is_some() => Ok(Some(run.absorbed_at_origin)),
                Ok(_) => Ok(None),
                Err(Error::PopulationBlowup { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        });
        let mut counts = Vec::new();
        let mut dropped = 0u64;
        for o in outcomes {
            match o? {
                Some(c) => counts.push(c),
                None => dropped += 1,
            }
        }
        let name = format!("y{y}");
        report.info(&format!("{name}_censored_or_blown_up"), dropped as f64, None);
        // Dropped runs have large K; count them above every tail point.
        let n = cfg.n_runs as f64;
        let w: Vec<f64> = counts.iter().map(|&c| y * (-y).exp() * c as f64).collect();
        let positive = (w.iter().filter(|&&v| v > 0.0).count() as f64 + dropped as f64) / n;
        report.info(&format!("{name}_positive_fraction"), positive, None);
        for &x in &cfg.tail_points {
            let above = (w.iter().filter(|&&v| v > x).count() as f64 + dropped as f64) / n;
            let se = (above * (1.0 - above) / n).sqrt();
            report.gate(
                &format!("{name}_tail_x{x}"),
                x * above,
                Some(x * se),
                Threshold::Within { lower: 1.0 - cfg.tail_tol, upper: 1.0 + cfg.tail_tol },
            );
            let truncated = w.iter().filter(|&&v| v <= x).sum::<f64>() / n;
            report.info(&format!("{name}_truncated_mean_minus_log_x{x}"), truncated - x.ln(), None);
        }
    }
    Ok(report)
}
