//! Extinction probability by time `t` for one particle started near the
//! critical curve, `phi_t(x) = P_{L_t(0) + x}(zeta <= t)`.

use anyhow::{bail, Result};
use bbm_core::model::critical_constant;
use bbm_core::simulator::map_runs;
use bbm_core::{CriticalCurve, Error, OffspringLaw, ParticleConfiguration, SimConfig};
use serde::{Deserialize, Serialize};

use crate::experiments::RunContext;
use crate::report::Report;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E7Config {
    pub schema_version: u32,
    pub seed: u64,
    pub offspring: OffspringLaw,
    pub t: f64,
    pub dt: f64,
    pub xs: Vec<f64>,
    pub n_runs: u64,
    /// Lead `v` of the shifted horizon `t + v t^{2/3}`.
    pub shift_v: f64,
    pub max_particles: usize,
}

/// Fractions of runs extinct by `t` and by the shifted horizon.
fn estimate(cfg: &E7Config, x: f64, seed: u64, ctx: &RunContext) -> Result<(f64, f64)> {
    let level = CriticalCurve::new(cfg.t, 0.0)?.level(0.0)?;
    let initial = ParticleConfiguration::single(level + x)?;
    let later = cfg.t + cfg.shift_v * cfg.t.powf(2.0 / 3.0);
    let sim = SimConfig::new(cfg.dt, seed, later).with_max_particles(cfg.max_particles);
    let outcomes: std::result::Result<Vec<Option<f64>>, Error> =
        map_runs(&initial, &sim, &cfg.offspring, 0..cfg.n_runs, ctx.workers, |_, r| {
            r.map(|run| run.extinction_time())
        })
        .into_iter()
        .collect();
    let outcomes = outcomes?;
    let n = outcomes.len() as f64;
    let by_t = outcomes.iter().filter(|z| z.is_some_and(|z| z <= cfg.t)).count() as f64 / n;
    let by_later = outcomes.iter().filter(|z| z.is_some()).count() as f64 / n;
    Ok((by_t, by_later))
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let k = xs.windows(2).position(|w| w[0] <= x && x <= w[1])?;
    let f = (x - xs[k]) / (xs[k + 1] - xs[k]);
    Some(ys[k] + f * (ys[k + 1] - ys[k]))
}

pub fn run(cfg: &E7Config, ctx: &RunContext) -> Result<Report> {
    if cfg.xs.windows(2).any(|w| w[0] >= w[1]) {
        bail!("xs must be increasing");
    }
    let mut report = Report::new("E7", ctx.seed, cfg)?;
    let n = cfg.n_runs as f64;
    let mut phi = Vec::new();
    let mut shifted = Vec::new();
    for (k, &x) in cfg.xs.iter().enumerate() {
        let (p, q) = estimate(cfg, x, crate::sub_seed(ctx.seed, k as u64), ctx)?;
        report.info(&format!("phi_x{x}"), p, Some((p * (1.0 - p) / n).sqrt()));
        report.info(&format!("phi_shifted_x{x}"), q, Some((q * (1.0 - q) / n).sqrt()));
        phi.push(p);
        shifted.push(q);
    }
    // Decreasing in x up to three standard errors.
    let monotone = phi.windows(2).all(|w| {
        let se = (w[0] * (1.0 - w[0]) / n + w[1] * (1.0 - w[1]) / n).sqrt();
        w[1] <= w[0] + 3.0 * se
    });
    report.gate_flag("phi_decreasing", monotone);
    report.gate_flag("phi_in_unit_interval", phi.iter().all(|p| (0.0..=1.0).contains(p)));
    report.info("phi_left_end", phi[0], None);
    report.info("phi_right_end", *phi.last().expect("nonempty"), None);
    report.info("extinction_law_q", cfg.offspring.q(), None);

    let offset = critical_constant() * cfg.shift_v / 3.0;
    for (k, &x) in cfg.xs.iter().enumerate() {
        if let Some(p) = interpolate(&cfg.xs, &phi, x - offset) {
            let q = shifted[k];
            let se = (p * (1.0 - p) / n + q * (1.0 - q) / n).sqrt();
            report.info(&format!("shift_relation_z_x{x}"), (q - p) / se, None);
        }
    }
    Ok(report)
}
