//! Coverage of the predicted survival time `T(0)` by the simulated
//! extinction time, and the predictor against a refining grid scan.

use std::f64::consts::PI;

use anyhow::{bail, Result};
use bbm_core::model::critical_constant;
use bbm_core::predictor::predict_survival_time;
use bbm_core::rng::StreamRng;
use bbm_core::simulator::map_runs;
use bbm_core::{Error, OffspringLaw, ParticleConfiguration, SimConfig};
use serde::{Deserialize, Serialize};

use crate::experiments::RunContext;
use crate::report::{Report, Threshold};
use crate::sampling::make_initial_config;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Leg {
    /// Horizon whose weight is set to 1/2, which makes `T(0)` equal to it.
    pub t: f64,
    pub n_runs: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E9Config {
    pub schema_version: u32,
    pub seed: u64,
    pub offspring: OffspringLaw,
    pub dt: f64,
    pub n_particles: usize,
    pub margin: f64,
    /// The first leg is gated; later legs must not cover better beyond noise.
    pub legs: Vec<Leg>,
    pub k_grid: Vec<f64>,
    pub gate_k: f64,
    pub min_coverage: f64,
    pub coverage_curve_target: f64,
    pub scan_configs: usize,
    pub scan_max_particles: usize,
    pub scan_rel_tol: f64,
}

fn weight(x: f64, t: f64) -> f64 {
    let l = critical_constant() * t.cbrt();
    if x <= 0.0 || x >= l {
        return 0.0;
    }
    l * (PI * x / l).sin() * (x - l).exp()
}

/// Smallest `t` meeting both prediction constraints, located by scanning
/// grids that shrink tenfold around the first admissible point.
pub fn scan_oracle(positions: &[f64], rel_tol: f64) -> f64 {
    let r = positions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ok = |t: f64| {
        critical_constant() * t.cbrt() >= r + 2.0 && positions.iter().map(|&x| weight(x, t)).sum::<f64>() <= 0.5
    };
    let mut h = 1.0;
    let mut t = h;
    while !ok(t) {
        t += h;
    }
    loop {
        let base = (t - h).max(0.0);
        if h <= rel_tol * t {
            return t;
        }
        h /= 10.0;
        let mut k = 1u32;
        let mut candidate = base + h;
        while !ok(candidate) && k < 10 {
            k += 1;
            candidate = base + k as f64 * h;
        }
        t = if ok(candidate) { candidate } else { base + 10.0 * h };
    }
}

pub fn run(cfg: &E9Config, ctx: &RunContext) -> Result<Report> {
    if cfg.legs.is_empty() || cfg.k_grid.is_empty() {
        bail!("need at least one leg and one k value");
    }
    if !cfg.k_grid.contains(&cfg.gate_k) {
        bail!("gate_k must appear in k_grid");
    }
    let mut report = Report::new("E9", ctx.seed, cfg)?;
    let k_max = cfg.k_grid.iter().copied().fold(0.0, f64::max);
    let mut curves: Vec<(Vec<f64>, u64)> = Vec::new();
    for (li, leg) in cfg.legs.iter().enumerate() {
        let initial = make_initial_config(leg.t, 0.5, cfg.n_particles, cfg.margin)?;
        let prediction = predict_survival_time(&initial)?;
        let t0 = prediction.time;
        let scale = t0.powf(2.0 / 3.0);
        let horizon = t0 + (k_max + 1.0) * scale;
        let sim = SimConfig::new(cfg.dt, crate::sub_seed(ctx.seed, li as u64), horizon);
        let zetas: std::result::Result<Vec<Option<f64>>, Error> =
            map_runs(&initial, &sim, &cfg.offspring, 0..leg.n_runs, ctx.workers, |_, r| {
                r.map(|run| run.extinction_time())
            })
            .into_iter()
            .collect();
        let zetas = zetas?;
        let n = zetas.len() as f64;
        let name = format!("T{}", leg.t);
        report.info(&format!("{name}_predicted"), t0, None);
        report.info(
            &format!("{name}_censored"),
            zetas.iter().filter(|z| z.is_none()).count() as f64,
            None,
        );
        let mut curve = Vec::new();
        for &k in &cfg.k_grid {
            let hits = zetas
                .iter()
                .filter(|z| z.is_some_and(|z| (z - t0).abs() <= k * scale))
                .count() as f64;
            let p = hits / n;
            let se = (p * (1.0 - p) / n).sqrt();
            report.info(&format!("{name}_coverage_k{k}"), p, Some(se));
            curve.push(p);
        }
        let first = cfg
            .k_grid
            .iter()
            .zip(&curve)
            .find(|(_, &p)| p >= cfg.coverage_curve_target)
            .map(|(&k, _)| k)
            .unwrap_or(f64::INFINITY);
        report.info(&format!("{name}_smallest_k_reaching_target"), first, None);
        curves.push((curve, leg.n_runs));
    }

    let gate_idx = cfg.k_grid.iter().position(|&k| k == cfg.gate_k).expect("checked");
    let (main, n_main) = &curves[0];
    let p = main[gate_idx];
    report.gate(
        "coverage_at_gate_k",
        p,
        Some((p * (1.0 - p) / *n_main as f64).sqrt()),
        Threshold::Above { value: cfg.min_coverage - 1e-12 },
    );
    for (other, n_other) in curves.iter().skip(1) {
        let mut worst = f64::NEG_INFINITY;
        for (&a, &b) in main.iter().zip(other) {
            let se = (a * (1.0 - a) / *n_main as f64 + b * (1.0 - b) / *n_other as f64).sqrt();
            worst = worst.max((b - a) - 3.0 * se);
        }
        report.info("shorter_horizon_excess_coverage", worst, None);
    }

    // Predictor against the refining scan on random configurations.
    let mut rng = StreamRng::new(crate::sub_seed(ctx.seed, 1000));
    let mut worst = 0.0f64;
    for _ in 0..cfg.scan_configs {
        let n = 1 + (rng.uniform() * cfg.scan_max_particles as f64) as usize;
        let xs: Vec<f64> = (0..n).map(|_| 0.05 + 9.95 * rng.uniform()).collect();
        let predicted = predict_survival_time(&ParticleConfiguration::new(0.0, xs.clone())?)?.time;
        let oracle = scan_oracle(&xs, 1e-9);
        worst = worst.max((predicted - oracle).abs() / oracle);
    }
    report.gate(
        "predictor_vs_scan_max_rel",
        worst,
        None,
        Threshold::Below { value: cfg.scan_rel_tol },
    );
    Ok(report)
}
