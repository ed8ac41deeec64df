//! First moments of the truncated observables `Z_{t,A}(s)` and of the
//! barrier count `R_{t,A}(0, s)` against the heat-kernel oracles.

use anyhow::{bail, Result};
use bbm_core::heatkernel::{bound_er2, bound_ez2, oracle_er, oracle_ez, Banded};
use bbm_core::model::observable_z;
use bbm_core::simulator::map_runs;
use bbm_core::{Barrier, CriticalCurve, Error, OffspringLaw, ParticleConfiguration, SimConfig};
use serde::{Deserialize, Serialize};

use crate::experiments::RunContext;
use crate::report::{Report, Threshold};
use crate::sampling::mean_se;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Leg {
    pub t: f64,
    pub s: f64,
    pub offsets: Vec<f64>,
    pub n_runs: Vec<u64>,
    /// Whether this leg's metrics decide the report.
    pub gating: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E6Config {
    pub schema_version: u32,
    pub seed: u64,
    pub offspring: OffspringLaw,
    pub dt: f64,
    /// The particle starts at `x_fraction * L_{t,A}(0)`.
    pub x_fraction: f64,
    pub kappa: f64,
    pub y_constant: f64,
    /// Allowed ratio of the empirical second moment to the bound shape.
    pub second_moment_factor: f64,
    /// Required relative standard error of each mean.
    pub max_rel_se: f64,
    pub max_particles: usize,
    pub legs: Vec<Leg>,
}

struct Moments {
    mean: f64,
    se: f64,
    second: f64,
}

fn moments(v: &[f64]) -> Moments {
    let (mean, se) = mean_se(v);
    let second = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    Moments { mean, se, second }
}

#[allow(clippy::too_many_arguments)]
fn judge(
    report: &mut Report,
    gating: bool,
    name: &str,
    m: &Moments,
    band: &Banded,
    bound: f64,
    cfg: &E6Config,
) {
    let mut put = |metric: &str, est: f64, unc: Option<f64>, th: Threshold| {
        let full = format!("{name}_{metric}");
        if gating {
            report.gate(&full, est, unc, th);
        } else {
            report.info(&full, est, unc);
        }
    };
    put(
        "mean_in_band",
        m.mean,
        Some(m.se),
        Threshold::Within { lower: band.lower, upper: band.upper },
    );
    put("rel_se", m.se / m.mean, None, Threshold::Below { value: cfg.max_rel_se });
    put(
        "second_moment_over_bound",
        m.second / bound,
        None,
        Threshold::Below { value: cfg.second_moment_factor },
    );
    report.info(&format!("{name}_oracle"), band.value, None);
}

pub fn run(cfg: &E6Config, ctx: &RunContext) -> Result<Report> {
    let mut report = Report::new("E6", ctx.seed, cfg)?;
    for (li, leg) in cfg.legs.iter().enumerate() {
        if leg.offsets.len() != leg.n_runs.len() {
            bail!("need one run count per offset");
        }
        for (k, (&a, &n)) in leg.offsets.iter().zip(&leg.n_runs).enumerate() {
            let (t, s) = (leg.t, leg.s);
            let curve = CriticalCurve::new(t, a)?;
            let x = cfg.x_fraction * curve.level(0.0)?;
            let z0 = curve.z(0.0, x);
            let initial = ParticleConfiguration::single(x)?;
            let seed = crate::sub_seed(ctx.seed, 10 * li as u64 + k as u64);
            let sim = SimConfig::new(cfg.dt, seed, s)
                .with_snapshots(vec![s])
                .with_barrier(Barrier::Record { t, offset: a })
                .with_max_particles(cfg.max_particles);
            let per_run: std::result::Result<Vec<(f64, f64, u64)>, Error> =
                map_runs(&initial, &sim, &cfg.offspring, 0..n, ctx.workers, |_, r| {
                    r.map(|run| {
                        (
                            observable_z(&run.snapshots[0], &curve),
                            run.barrier_count(0.0, s) as f64,
                            run.particle_steps,
                        )
                    })
                })
                .into_iter()
                .collect();
            let per_run = per_run?;
            let zs: Vec<f64> = per_run.iter().map(|r| r.0).collect();
            let rs: Vec<f64> = per_run.iter().map(|r| r.1).collect();
            let steps: u64 = per_run.iter().map(|r| r.2).sum();

            let name = format!("t{t}_A{a}");
            report.info(&format!("{name}_start"), x, None);
            report.info(&format!("{name}_initial_z"), z0, None);
            report.info(&format!("{name}_particle_steps"), steps as f64, None);

            let ez = oracle_ez(t, a, 0.0, s, x, cfg.kappa)?;
            let er = oracle_er(t, a, 0.0, s, x, cfg.kappa, cfg.y_constant)?;
            let mz = moments(&zs);
            let mr = moments(&rs);
            judge(&mut report, leg.gating, &format!("{name}_z"), &mz, &ez, bound_ez2(t, a, 0.0, s, x)?, cfg);
            judge(&mut report, leg.gating, &format!("{name}_r"), &mr, &er, bound_er2(t, a, 0.0, s, x)?, cfg);

            // Runs needed to reach the precision target, from the observed spread.
            let worst = (mz.se / mz.mean).max(mr.se / mr.mean);
            let needed = if worst.is_finite() {
                (n as f64 * (worst / cfg.max_rel_se).powi(2)).ceil()
            } else {
                f64::INFINITY
            };
            report.info(&format!("{name}_runs_for_precision"), needed, None);
            report.info(
                &format!("{name}_particle_steps_for_precision"),
                needed.max(n as f64) * steps as f64 / n as f64,
                None,
            );
        }
    }
    Ok(report)
}
