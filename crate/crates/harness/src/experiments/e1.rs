//! Survival probability of a single particle against `alpha pi x e^{x - L_t(0)}`.

use std::f64::consts::PI;

use anyhow::{bail, Result};
use bbm_core::simulator::map_runs;
use bbm_core::{CriticalCurve, Error, OffspringLaw, ParticleConfiguration, SimConfig};
use serde::{Deserialize, Serialize};

use crate::experiments::RunContext;
use crate::report::{Report, Threshold};
use crate::sampling::wilson_interval;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Leg {
    pub t: f64,
    pub n_runs: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E1Config {
    pub schema_version: u32,
    pub seed: u64,
    pub offspring: OffspringLaw,
    pub dt: f64,
    pub xs: Vec<f64>,
    /// The gated horizon.
    pub main: Leg,
    /// A second horizon whose implied alpha is compared with the main one.
    pub compare: Option<Leg>,
    /// Normal quantile for the confidence intervals.
    pub z_quantile: f64,
    /// PASS when (max lower CI) / (min upper CI) of the ratios is below `1 + spread_max`.
    pub spread_max: f64,
}

struct LegResult {
    ratios: Vec<(f64, f64, f64)>,
    alpha: f64,
    alpha_se: f64,
}

fn run_leg(cfg: &E1Config, leg: &Leg, tag: u64, ctx: &RunContext, report: &mut Report) -> Result<LegResult> {
    if leg.n_runs.len() != cfg.xs.len() {
        bail!("need one run count per starting position");
    }
    let level = CriticalCurve::new(leg.t, 0.0)?.level(0.0)?;
    let mut ratios = Vec::new();
    for (k, (&x, &n)) in cfg.xs.iter().zip(&leg.n_runs).enumerate() {
        let initial = ParticleConfiguration::single(x)?;
        let seed = crate::sub_seed(ctx.seed, tag * 100 + k as u64);
        let sim = SimConfig::new(cfg.dt, seed, leg.t);
        let alive: Result<u64, Error> = map_runs(&initial, &sim, &cfg.offspring, 0..n, ctx.workers, |_, r| {
            r.map(|run| run.survived_past(leg.t) as u64)
        })
        .into_iter()
        .sum();
        let alive = alive?;
        let scale = PI * x * (x - level).exp();
        let (lo, hi) = wilson_interval(alive, n, cfg.z_quantile);
        let p = alive as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let name = format!("t{}_x{x}", leg.t);
        report.info(&format!("{name}_survival"), p, Some(se));
        report.info(&format!("{name}_ratio"), p / scale, Some(se / scale));
        ratios.push((p / scale, lo / scale, hi / scale));
    }
    // Inverse-variance weighted alpha over the starting points.
    let mut num = 0.0;
    let mut den = 0.0;
    for &(r, lo, hi) in &ratios {
        let se = ((hi - lo) / (2.0 * cfg.z_quantile)).max(f64::MIN_POSITIVE);
        num += r / (se * se);
        den += 1.0 / (se * se);
    }
    let alpha = num / den;
    let alpha_se = den.sqrt().recip();
    report.info(&format!("t{}_alpha", leg.t), alpha, Some(alpha_se));
    Ok(LegResult { ratios, alpha, alpha_se })
}

pub fn run(cfg: &E1Config, ctx: &RunContext) -> Result<Report> {
    let mut report = Report::new("E1", ctx.seed, cfg)?;
    let main = run_leg(cfg, &cfg.main, 1, ctx, &mut report)?;
    let max_lower = main.ratios.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let min_upper = main.ratios.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    let raw_max = main.ratios.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let raw_min = main.ratios.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    report.info("ratio_spread_raw", raw_max / raw_min, None);
    report.gate_flag("ratios_positive", raw_min > 0.0);
    // After CI widening the spread is 1 when the intervals overlap.
    let spread = (max_lower / min_upper).max(1.0);
    report.gate("ratio_spread", spread, None, Threshold::Below { value: 1.0 + cfg.spread_max });

    if let Some(leg) = &cfg.compare {
        let other = run_leg(cfg, leg, 2, ctx, &mut report)?;
        let z = (main.alpha - other.alpha).abs() / main.alpha_se.hypot(other.alpha_se);
        report.info("alpha_two_horizon_z", z, None);
        report.note(format!(
            "implied alpha {:.4} at t = {} versus {:.4} at t = {}",
            main.alpha, cfg.main.t, other.alpha, leg.t
        ));
    }
    Ok(report)
}
