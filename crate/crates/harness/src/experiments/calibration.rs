//! Monte Carlo calibration of the simulator against exact expectations.

use anyhow::Result;
use bbm_core::model::observable_v;
use bbm_core::simulator::map_runs;
use bbm_core::{Error, OffspringLaw, ParticleConfiguration, SimConfig};
use serde::{Deserialize, Serialize};

use crate::experiments::RunContext;
use crate::report::{Report, Threshold};
use crate::sampling::mean_se;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub offspring: OffspringLaw,
    pub n_runs: u64,
    pub dt: f64,
    /// Start far from the origin so absorption is negligible.
    pub growth_start: f64,
    pub growth_times: Vec<f64>,
    pub martingale_start: f64,
    pub martingale_times: Vec<f64>,
    pub survival_start: f64,
    pub survival_horizon: f64,
    /// Pass when every standardised deviation is below this many SE.
    pub max_se: f64,
}

fn collect<T>(results: Vec<Result<T, Error>>) -> Result<Vec<T>> {
    Ok(results.into_iter().collect::<std::result::Result<Vec<_>, _>>()?)
}

pub fn run(cfg: &CalibrationConfig, ctx: &RunContext) -> Result<Report> {
    let mut report = Report::new("calibration", ctx.seed, cfg)?;
    let law = &cfg.offspring;
    let limit = Threshold::Below { value: cfg.max_se };

    // Mean population without absorption: e^{beta m s}.
    let horizon = *cfg.growth_times.last().unwrap_or(&1.0);
    let sim = SimConfig::new(cfg.dt, crate::sub_seed(ctx.seed, 1), horizon)
        .with_snapshots(cfg.growth_times.clone());
    let initial = ParticleConfiguration::single(cfg.growth_start)?;
    let counts = collect(map_runs(&initial, &sim, law, 0..cfg.n_runs, ctx.workers, |_, r| {
        r.map(|run| run.snapshots.iter().map(|c| c.len() as f64).collect::<Vec<_>>())
    }))?;
    for (k, &s) in cfg.growth_times.iter().enumerate() {
        let v: Vec<f64> = counts.iter().map(|c| c[k]).collect();
        let (m, se) = mean_se(&v);
        let want = (law.beta() * law.m() * s).exp();
        report.info(&format!("population_mean_s{s}"), m, Some(se));
        report.info(&format!("population_expected_s{s}"), want, None);
        report.gate(&format!("population_z_s{s}"), (m - want).abs() / se, None, limit);
    }
    let escaped = counts.iter().any(|c| c.iter().any(|&n| n == 0.0));
    report.gate_flag("population_no_absorption", !escaped);

    // V = sum x e^x is a martingale for the absorbed process.
    let horizon = *cfg.martingale_times.last().unwrap_or(&1.0);
    let sim = SimConfig::new(cfg.dt, crate::sub_seed(ctx.seed, 2), horizon)
        .with_snapshots(cfg.martingale_times.clone());
    let initial = ParticleConfiguration::single(cfg.martingale_start)?;
    let values = collect(map_runs(&initial, &sim, law, 0..cfg.n_runs, ctx.workers, |_, r| {
        r.map(|run| run.snapshots.iter().map(observable_v).collect::<Vec<_>>())
    }))?;
    let v0 = observable_v(&initial);
    for (k, &s) in cfg.martingale_times.iter().enumerate() {
        let v: Vec<f64> = values.iter().map(|c| c[k]).collect();
        let (m, se) = mean_se(&v);
        report.info(&format!("v_mean_s{s}"), m, Some(se));
        report.gate(&format!("v_z_s{s}"), (m - v0).abs() / se, None, limit);
    }

    // Survival probability under step refinement.
    let initial = ParticleConfiguration::single(cfg.survival_start)?;
    let mut estimates = Vec::new();
    for (k, dt) in [cfg.dt, cfg.dt / 2.0].into_iter().enumerate() {
        let sim = SimConfig::new(dt, crate::sub_seed(ctx.seed, 3 + k as u64), cfg.survival_horizon);
        let alive = collect(map_runs(&initial, &sim, law, 0..cfg.n_runs, ctx.workers, |_, r| {
            r.map(|run| run.survived_past(cfg.survival_horizon) as u64)
        }))?;
        let p = alive.iter().sum::<u64>() as f64 / cfg.n_runs as f64;
        let se = (p * (1.0 - p) / cfg.n_runs as f64).sqrt();
        report.info(&format!("survival_dt{dt}"), p, Some(se));
        estimates.push((p, se));
    }
    let (p1, s1) = estimates[0];
    let (p2, s2) = estimates[1];
    report.gate("survival_refinement_z", (p1 - p2).abs() / s1.hypot(s2), None, limit);
    Ok(report)
}
