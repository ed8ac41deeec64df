//! Initial configurations, survival-conditioned sampling and small
//! estimation helpers shared by the experiments.

use anyhow::{bail, Result};
use bbm_core::model::weight_z;
use bbm_core::simulator::map_runs;
use bbm_core::{CriticalCurve, Error, OffspringLaw, ParticleConfiguration, RunResult, SimConfig};

/// `n_particles` particles at the common position `x < L_t(0) - margin`
/// below the peak of `x -> z_t(x, 0)` with `n z_t(x, 0) = target_z`.
pub fn make_initial_config(
    t: f64,
    target_z: f64,
    n_particles: usize,
    margin: f64,
) -> Result<ParticleConfiguration> {
    if !(target_z > 0.0 && target_z.is_finite()) {
        bail!("target Z = {target_z} must be positive");
    }
    if !(margin >= 2.0) {
        bail!("margin = {margin} must be at least 2");
    }
    if n_particles == 0 {
        bail!("need at least one particle");
    }
    let level = CriticalCurve::new(t, 0.0)?.level(0.0)?;
    let top = level - margin;
    if top <= 0.0 {
        bail!("margin {margin} leaves no room below L_t(0) = {level}");
    }
    let z = |x: f64| weight_z(t, 0.0, 0.0, x);
    let want = target_z / n_particles as f64;

    // z is unimodal on [0, L]; locate its maximum on [0, top].
    let (mut a, mut b) = (0.0, top);
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if z(m1) < z(m2) {
            a = m1;
        } else {
            b = m2;
        }
    }
    let peak = 0.5 * (a + b);
    if z(peak) < want {
        bail!(
            "no position below L_t(0) - margin = {top} carries weight {want} (max {})",
            z(peak)
        );
    }
    let (mut lo, mut hi) = (0.0, peak);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if z(mid) < want {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    Ok(ParticleConfiguration::new(0.0, vec![x; n_particles])?)
}

/// Outcome of a rejection sampler conditioned on survival.
#[derive(Debug)]
pub struct Conditioned<T> {
    /// Accepted records, in increasing trial index.
    pub accepted: Vec<T>,
    pub trials: u64,
    /// Trials that hit the population or work cap; counted as rejections.
    pub blowups: u64,
}

impl<T> Conditioned<T> {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted.len() as f64 / self.trials as f64
    }
}

/// Rejection settings for survival conditioning.
#[derive(Debug, Clone, Copy)]
pub struct Rejection {
    /// Accept runs with `zeta > condition_time`; `None` accepts every run.
    pub condition_time: Option<f64>,
    pub n_accept: usize,
    pub max_trials: u64,
    pub chunk: u64,
}

/// Runs trials in index order, in chunks of `chunk`, and keeps the first
/// `n_accept` runs (by index) that survive past `condition_time`. The
/// selection depends only on the seed, not on the worker count.
pub fn sample_conditioned<T, F>(
    initial: &ParticleConfiguration,
    sim: &SimConfig,
    law: &OffspringLaw,
    rejection: Rejection,
    workers: usize,
    keep: F,
) -> Result<Conditioned<T>>
where
    T: Send,
    F: Fn(u64, &RunResult) -> T + Sync,
{
    if rejection.n_accept == 0 || rejection.chunk == 0 {
        bail!("n_accept and chunk must be positive");
    }
    let mut out = Conditioned {
        accepted: Vec::with_capacity(rejection.n_accept),
        trials: 0,
        blowups: 0,
    };
    let mut next = 0u64;
    while out.accepted.len() < rejection.n_accept {
        if next >= rejection.max_trials {
            bail!(
                "rejection budget of {} trials exhausted with {} of {} runs accepted",
                rejection.max_trials,
                out.accepted.len(),
                rejection.n_accept
            );
        }
        let end = (next + rejection.chunk).min(rejection.max_trials);
        let results = map_runs(initial, sim, law, next..end, workers, |i, r| match r {
            Ok(run) => {
                let alive = rejection.condition_time.is_none_or(|s| run.survived_past(s));
                Ok(alive.then(|| keep(i, &run)))
            }
            Err(Error::PopulationBlowup { .. }) => Err(None),
            Err(e) => Err(Some(e)),
        });
        for r in results {
            out.trials += 1;
            match r {
                Ok(Some(rec)) => {
                    out.accepted.push(rec);
                    if out.accepted.len() == rejection.n_accept {
                        return Ok(out);
                    }
                }
                Ok(None) => {}
                Err(None) => out.blowups += 1,
                Err(Some(e)) => return Err(e.into()),
            }
        }
        next = end;
    }
    Ok(out)
}

/// Sample mean and its standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}
