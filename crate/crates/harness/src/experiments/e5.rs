//! Laplace transforms of the time-changed weight `Z_t((1 - e^{-u}) t)`
//! against the continuous-state branching process with mechanism
//! `a q + (2/3) q log q`, fitting the single parameter `a`.

use anyhow::{bail, Result};
use bbm_core::csbp::BranchingMechanism;
use bbm_core::model::observable_z;
use bbm_core::rng::StreamRng;
use bbm_core::simulator::map_runs;
use bbm_core::stats::{quantile, Sample};
use bbm_core::{CriticalCurve, Error, OffspringLaw, SimConfig};
use serde::{Deserialize, Serialize};

use crate::experiments::RunContext;
use crate::report::{Report, Threshold};
use crate::sampling::{make_initial_config, mean_se, sample_conditioned, Rejection};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionedVariant {
    pub n_accept: usize,
    pub prior_survival: f64,
    pub max_trials: u64,
    pub chunk: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E5Config {
    pub schema_version: u32,
    pub seed: u64,
    pub offspring: OffspringLaw,
    pub horizons: Vec<f64>,
    pub dt: f64,
    pub initial_z: f64,
    pub n_particles: usize,
    pub margin: f64,
    pub us: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub n_runs: u64,
    pub bootstrap: usize,
    pub a_range: [f64; 2],
    pub max_rel_dev: f64,
    pub conditioned: Option<ConditionedVariant>,
}

/// Per-run values of `exp(-lambda Z)` on the `(u, lambda)` grid, row-major in `u`.
struct Observations {
    z0: f64,
    cells: Vec<(f64, f64)>,
    per_run: Vec<Vec<f64>>,
}

impl Observations {
    fn means(&self, idx: &[usize]) -> Vec<f64> {
        let mut m = vec![0.0; self.cells.len()];
        for &i in idx {
            for (acc, v) in m.iter_mut().zip(&self.per_run[i]) {
                *acc += v;
            }
        }
        m.iter().map(|v| v / idx.len() as f64).collect()
    }
}

fn model_curve(cells: &[(f64, f64)], z0: f64, a: f64) -> Vec<f64> {
    let m = BranchingMechanism::with_unit_scale(a).expect("finite a");
    cells
        .iter()
        .map(|&(u, l)| (-z0 * m.laplace_exponent(u, l).expect("valid grid")).exp())
        .collect()
}

fn sse(cells: &[(f64, f64)], z0: f64, a: f64, target: &[f64]) -> f64 {
    model_curve(cells, z0, a)
        .iter()
        .zip(target)
        .map(|(m, t)| (m - t).powi(2))
        .sum()
}

/// Least-squares `a` by a coarse scan followed by golden-section refinement.
fn fit_a(cells: &[(f64, f64)], z0: f64, target: &[f64], range: [f64; 2]) -> f64 {
    let n = 200;
    let step = (range[1] - range[0]) / n as f64;
    let mut best = range[0];
    let mut best_v = f64::INFINITY;
    for k in 0..=n {
        let a = range[0] + k as f64 * step;
        let v = sse(cells, z0, a, target);
        if v < best_v {
            best_v = v;
            best = a;
        }
    }
    let (mut lo, mut hi) = ((best - step).max(range[0]), (best + step).min(range[1]));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let x1 = hi - g * (hi - lo);
        let x2 = lo + g * (hi - lo);
        if sse(cells, z0, x1, target) < sse(cells, z0, x2, target) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    0.5 * (lo + hi)
}

fn observe(cfg: &E5Config, t: f64, leg: u64, ctx: &RunContext) -> Result<Observations> {
    let initial = make_initial_config(t, cfg.initial_z, cfg.n_particles, cfg.margin)?;
    let curve = CriticalCurve::new(t, 0.0)?;
    let times: Vec<f64> = cfg.us.iter().map(|u| -(-u).exp_m1() * t).collect();
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let sim = SimConfig::new(cfg.dt, crate::sub_seed(ctx.seed, leg), horizon).with_snapshots(times);
    let cells: Vec<(f64, f64)> = cfg
        .us
        .iter()
        .flat_map(|&u| cfg.lambdas.iter().map(move |&l| (u, l)))
        .collect();
    let lambdas = cfg.lambdas.clone();
    let per_run: std::result::Result<Vec<Vec<f64>>, Error> =
        map_runs(&initial, &sim, &cfg.offspring, 0..cfg.n_runs, ctx.workers, |_, r| {
            r.map(|run| {
                run.snapshots
                    .iter()
                    .flat_map(|c| {
                        let z = observable_z(c, &curve);
                        lambdas.iter().map(move |l| (-l * z).exp())
                    })
                    .collect()
            })
        })
        .into_iter()
        .collect();
    Ok(Observations {
        z0: observable_z(&initial, &curve),
        cells,
        per_run: per_run?,
    })
}

pub fn run(cfg: &E5Config, ctx: &RunContext) -> Result<Report> {
    if cfg.horizons.is_empty() || cfg.n_runs < 2 || cfg.bootstrap < 10 {
        bail!("need horizons, at least 2 runs and at least 10 bootstrap resamples");
    }
    let mut report = Report::new("E5", ctx.seed, cfg)?;
    let mut fits = Vec::new();
    for (k, &t) in cfg.horizons.iter().enumerate() {
        let obs = observe(cfg, t, 1 + k as u64, ctx)?;
        let all: Vec<usize> = (0..obs.per_run.len()).collect();
        let target = obs.means(&all);
        let a = fit_a(&obs.cells, obs.z0, &target, cfg.a_range);
        let model = model_curve(&obs.cells, obs.z0, a);
        let mut worst = 0.0f64;
        for (j, &(u, l)) in obs.cells.iter().enumerate() {
            let col: Vec<f64> = obs.per_run.iter().map(|r| r[j]).collect();
            let (_, se) = mean_se(&col);
            report.info(&format!("t{t}_laplace_u{u}_l{l}"), target[j], Some(se));
            worst = worst.max((target[j] - model[j]).abs() / model[j]);
        }
        report.info(&format!("t{t}_initial_z"), obs.z0, None);
        report.gate(
            &format!("t{t}_max_rel_dev"),
            worst,
            None,
            Threshold::Below { value: cfg.max_rel_dev },
        );

        let mut rng = StreamRng::new(crate::sub_seed(ctx.seed, 100 + k as u64));
        let n = obs.per_run.len();
        let boot: Vec<f64> = (0..cfg.bootstrap)
            .map(|_| {
                let idx: Vec<usize> = (0..n).map(|_| ((rng.uniform() * n as f64) as usize).min(n - 1)).collect();
                fit_a(&obs.cells, obs.z0, &obs.means(&idx), cfg.a_range)
            })
            .collect();
        let boot = Sample::new(boot)?;
        let ci = (quantile(&boot, 0.025)?, quantile(&boot, 0.975)?);
        report.info(&format!("t{t}_fitted_a"), a, Some((ci.1 - ci.0) / 3.92));
        report.info(&format!("t{t}_fitted_a_ci_lower"), ci.0, None);
        report.info(&format!("t{t}_fitted_a_ci_upper"), ci.1, None);
        report.info(&format!("t{t}_implied_alpha"), (-1.5 * a).exp(), None);
        fits.push((a, ci));
    }
    if fits.len() >= 2 {
        let (_, ci) = fits[0];
        let (a_last, _) = fits[fits.len() - 1];
        report.gate(
            "fitted_a_stable",
            a_last,
            None,
            Threshold::Within { lower: ci.0, upper: ci.1 },
        );
    }

    if let Some(cv) = &cfg.conditioned {
        let t = *cfg.horizons.last().expect("checked");
        if (cv.max_trials as f64) < cv.n_accept as f64 / cv.prior_survival {
            bail!("conditioned rejection budget is below the expected trial count");
        }
        let initial = make_initial_config(t, cfg.initial_z, cfg.n_particles, cfg.margin)?;
        let curve = CriticalCurve::new(t, 0.0)?;
        let times: Vec<f64> = cfg.us.iter().map(|u| -(-u).exp_m1() * t).collect();
        let sim = SimConfig::new(cfg.dt, crate::sub_seed(ctx.seed, 50), t).with_snapshots(times);
        let rejection = Rejection {
            condition_time: Some(t),
            n_accept: cv.n_accept,
            max_trials: cv.max_trials,
            chunk: cv.chunk,
        };
        let out = sample_conditioned(&initial, &sim, &cfg.offspring, rejection, ctx.workers, |_, run| {
            run.snapshots.iter().map(|c| observable_z(c, &curve)).collect::<Vec<f64>>()
        })?;
        report.info("conditioned_acceptance_rate", out.acceptance_rate(), None);
        for (k, &u) in cfg.us.iter().enumerate() {
            for &l in &cfg.lambdas {
                let v: Vec<f64> = out.accepted.iter().map(|z| (-l * z[k]).exp()).collect();
                let (m, se) = mean_se(&v);
                report.info(&format!("conditioned_t{t}_laplace_u{u}_l{l}"), m, Some(se));
            }
        }
    }
    Ok(report)
}
