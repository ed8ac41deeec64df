//! Grid Monte Carlo engine for branching Brownian motion with drift `-1`.
//!
//! Each step of length `h` moves every particle by an exact
//! `Normal(-h, h)` increment. Killing at the origin is applied at the grid
//! point and inside the step through the Brownian-bridge crossing
//! probability `exp(-2 x0 x1 / h)`. The optional moving barrier
//! `L_{t,A}` is treated the same way after linearising it over the step,
//! using the distances to the barrier at both ends. Each particle carries
//! an exponential branching clock of rate `beta`; a clock that expires
//! inside a step fires at the end of that step, where the particle is
//! replaced by `k ~ (p_k)` offspring at its current position.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CriticalCurve, OffspringLaw, ParticleConfiguration};
use crate::rng::{mix, StreamRng};

/// Crossing probabilities below `exp(-CROSSING_CUTOFF)` are treated as zero.
const CROSSING_CUTOFF: f64 = 40.0;

pub const DEFAULT_MAX_PARTICLES: usize = 10_000_000;

/// Moving barrier along the shifted critical curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Barrier {
    None,
    /// Remove particles that hit `L_{t,A}`.
    Absorb { t: f64, offset: f64 },
    /// Remove particles that hit `L_{t,A}` and log each hit.
    Record { t: f64, offset: f64 },
}

impl Barrier {
    fn curve(&self) -> Result<Option<(CriticalCurve, bool)>> {
        match *self {
            Barrier::None => Ok(None),
            Barrier::Absorb { t, offset } => Ok(Some((CriticalCurve::new(t, offset)?, false))),
            Barrier::Record { t, offset } => Ok(Some((CriticalCurve::new(t, offset)?, true))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub seed: u64,
    pub horizon: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_barrier")]
    pub barrier: Barrier,
    #[serde(default = "default_max_particles")]
    pub max_particles: usize,
    /// Optional work cap on the cumulative number of particle-steps.
    #[serde(default)]
    pub max_particle_steps: Option<u64>,
}

fn default_barrier() -> Barrier {
    Barrier::None
}

fn default_max_particles() -> usize {
    DEFAULT_MAX_PARTICLES
}

impl SimConfig {
    pub fn new(dt: f64, seed: u64, horizon: f64) -> Self {
        Self {
            dt,
            seed,
            horizon,
            snapshot_times: Vec::new(),
            barrier: Barrier::None,
            max_particles: DEFAULT_MAX_PARTICLES,
            max_particle_steps: None,
        }
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn with_barrier(mut self, barrier: Barrier) -> Self {
        self.barrier = barrier;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_particles(mut self, cap: usize) -> Self {
        self.max_particles = cap;
        self
    }

    pub fn with_max_particle_steps(mut self, cap: Option<u64>) -> Self {
        self.max_particle_steps = cap;
        self
    }

    pub fn validate(&self, start: f64) -> Result<()> {
        let err = |m: String| Err(Error::SimConfig(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return err(format!("dt = {} must be positive", self.dt));
        }
        if !(self.horizon.is_finite() && self.horizon >= start) {
            return err(format!("horizon {} precedes start time {start}", self.horizon));
        }
        let span = self.horizon - start;
        if span > 0.0 && self.dt > 0.01 * span.min(1.0) * (1.0 + 1e-12) {
            return err(format!(
                "dt = {} exceeds 0.01 * min(1, horizon) = {}",
                self.dt,
                0.01 * span.min(1.0)
            ));
        }
        if self.max_particles == 0 {
            return err("max_particles must be positive".into());
        }
        if self.snapshot_times.windows(2).any(|w| w[0] > w[1]) {
            return err("snapshot times must be sorted".into());
        }
        if self
            .snapshot_times
            .iter()
            .any(|s| !(*s >= start && *s <= self.horizon))
        {
            return err(format!(
                "snapshot times must lie in [{start}, {}]",
                self.horizon
            ));
        }
        if let Some((curve, _)) = self.barrier.curve()? {
            if self.horizon > curve.t_a() {
                return err(format!(
                    "horizon {} is past t_A = {} of the barrier",
                    self.horizon,
                    curve.t_a()
                ));
            }
        }
        Ok(())
    }
}

/// Extinction time `zeta`, or censoring at the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extinction {
    At(f64),
    Censored,
}

impl Serialize for Extinction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Extinction::At(t) => s.serialize_f64(*t),
            Extinction::Censored => s.serialize_str("censored"),
        }
    }
}

impl<'de> Deserialize<'de> for Extinction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Time(f64),
            Tag(String),
        }
        match Repr::deserialize(d)? {
            Repr::Time(t) => Ok(Extinction::At(t)),
            Repr::Tag(tag) if tag == "censored" => Ok(Extinction::Censored),
            Repr::Tag(tag) => Err(serde::de::Error::custom(format!("unknown extinction tag {tag}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierHit {
    pub time: f64,
    pub position: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub extinction: Extinction,
    pub horizon: f64,
    /// One configuration per requested snapshot time, in order.
    pub snapshots: Vec<ParticleConfiguration>,
    pub barrier_log: Vec<BarrierHit>,
    /// Particles killed at the origin over the whole run.
    pub absorbed_at_origin: u64,
    pub particle_steps: u64,
    pub rng_draws: u64,
}

impl RunResult {
    pub fn extinction_time(&self) -> Option<f64> {
        match self.extinction {
            Extinction::At(t) => Some(t),
            Extinction::Censored => None,
        }
    }

    /// Whether `zeta > s`. Censored runs count as alive up to the horizon.
    pub fn survived_past(&self, s: f64) -> bool {
        match self.extinction {
            Extinction::At(t) => t > s,
            Extinction::Censored => s <= self.horizon,
        }
    }

    pub fn snapshot_at(&self, time: f64) -> Option<&ParticleConfiguration> {
        self.snapshots.iter().find(|c| c.time() == time)
    }

    /// `R_{t,A}(r, s)`: barrier hits with `r <= time <= s`.
    pub fn barrier_count(&self, r: f64, s: f64) -> usize {
        self.barrier_log
            .iter()
            .filter(|h| h.time >= r && h.time <= s)
            .count()
    }
}

struct Engine<'a> {
    law: &'a OffspringLaw,
    rng: StreamRng,
    positions: Vec<f64>,
    clocks: Vec<f64>,
    next_positions: Vec<f64>,
    next_clocks: Vec<f64>,
    barrier: Option<(CriticalCurve, bool)>,
    barrier_log: Vec<BarrierHit>,
    absorbed_at_origin: u64,
    particle_steps: u64,
}

impl<'a> Engine<'a> {
    fn fresh_clock(&mut self) -> f64 {
        self.rng.exp1() / self.law.beta()
    }

    /// Removes particles at or above the barrier at `time`.
    fn trim_to_barrier(&mut self, time: f64) {
        let Some((curve, record)) = self.barrier else {
            return;
        };
        let level = curve.level_raw(time);
        let mut kept = 0;
        for i in 0..self.positions.len() {
            let x = self.positions[i];
            if x >= level {
                if record {
                    self.barrier_log.push(BarrierHit {
                        time,
                        position: level,
                    });
                }
            } else {
                self.positions[kept] = x;
                self.clocks[kept] = self.clocks[i];
                kept += 1;
            }
        }
        self.positions.truncate(kept);
        self.clocks.truncate(kept);
    }

    fn step(&mut self, start: f64, end: f64) {
        let h = end - start;
        let sqrt_h = h.sqrt();
        let two_over_h = 2.0 / h;
        let levels = self
            .barrier
            .map(|(curve, record)| (curve.level_raw(start), curve.level_raw(end), record));

        self.next_positions.clear();
        self.next_clocks.clear();
        self.particle_steps += self.positions.len() as u64;

        for i in 0..self.positions.len() {
            let x0 = self.positions[i];
            let x1 = x0 - h + sqrt_h * self.rng.normal();

            if x1 <= 0.0 {
                self.absorbed_at_origin += 1;
                continue;
            }
            let e = two_over_h * x0 * x1;
            if e < CROSSING_CUTOFF && self.rng.uniform() < (-e).exp() {
                self.absorbed_at_origin += 1;
                continue;
            }

            if let Some((b0, b1, record)) = levels {
                let d1 = b1 - x1;
                let hit = d1 <= 0.0 || {
                    let e = two_over_h * (b0 - x0) * d1;
                    e < CROSSING_CUTOFF && self.rng.uniform() < (-e).exp()
                };
                if hit {
                    if record {
                        self.barrier_log.push(BarrierHit {
                            time: end,
                            position: b1,
                        });
                    }
                    continue;
                }
            }

            let clock = self.clocks[i] - h;
            if clock > 0.0 {
                self.next_positions.push(x1);
                self.next_clocks.push(clock);
            } else {
                let k = self.law.sample(self.rng.uniform());
                for _ in 0..k {
                    let fresh = self.fresh_clock();
                    self.next_positions.push(x1);
                    self.next_clocks.push(fresh);
                }
            }
        }

        std::mem::swap(&mut self.positions, &mut self.next_positions);
        std::mem::swap(&mut self.clocks, &mut self.next_clocks);
    }
}

/// Simulates one trajectory from `initial` up to `sim.horizon` or extinction.
pub fn run(
    initial: &ParticleConfiguration,
    sim: &SimConfig,
    law: &OffspringLaw,
) -> Result<RunResult> {
    if initial.is_empty() {
        return Err(Error::Extinct);
    }
    let start = initial.time();
    sim.validate(start)?;

    let mut engine = Engine {
        law,
        rng: StreamRng::new(sim.seed),
        positions: initial.positions().to_vec(),
        clocks: Vec::with_capacity(initial.len()),
        next_positions: Vec::new(),
        next_clocks: Vec::new(),
        barrier: sim.barrier.curve()?,
        barrier_log: Vec::new(),
        absorbed_at_origin: 0,
        particle_steps: 0,
    };
    for _ in 0..initial.len() {
        let clock = engine.fresh_clock();
        engine.clocks.push(clock);
    }
    engine.trim_to_barrier(start);

    let mut snapshots = Vec::with_capacity(sim.snapshot_times.len());
    let mut extinction = if engine.positions.is_empty() {
        Extinction::At(start)
    } else {
        Extinction::Censored
    };

    let mut targets: Vec<f64> = sim.snapshot_times.clone();
    targets.push(sim.horizon);
    targets.dedup();

    let mut now = start;
    let mut snapshot_idx = 0;
    'segments: for &target in &targets {
        if matches!(extinction, Extinction::At(_)) {
            break;
        }
        if target > now {
            let n_steps = ((target - now) / sim.dt * (1.0 - 1e-12)).ceil().max(1.0) as u64;
            let h = (target - now) / n_steps as f64;
            for k in 1..=n_steps {
                let step_start = now + (k - 1) as f64 * h;
                let step_end = if k == n_steps { target } else { now + k as f64 * h };
                engine.step(step_start, step_end);

                if engine.positions.len() > sim.max_particles
                    || sim
                        .max_particle_steps
                        .is_some_and(|cap| engine.particle_steps > cap)
                {
                    return Err(Error::PopulationBlowup {
                        time: step_end,
                        particles: engine.positions.len(),
                        particle_steps: engine.particle_steps,
                    });
                }
                if engine.positions.is_empty() {
                    extinction = Extinction::At(step_end);
                    now = step_end;
                    break 'segments;
                }
            }
            now = target;
        }
        while snapshot_idx < sim.snapshot_times.len() && sim.snapshot_times[snapshot_idx] == now {
            snapshots.push(ParticleConfiguration::from_valid(
                now,
                engine.positions.clone(),
            ));
            snapshot_idx += 1;
        }
    }
    // Snapshots requested after extinction are empty.
    while snapshot_idx < sim.snapshot_times.len() {
        let time = sim.snapshot_times[snapshot_idx];
        if time < now {
            return Err(Error::Internal(format!("snapshot at {time} was skipped")));
        }
        snapshots.push(ParticleConfiguration::extinct(time));
        snapshot_idx += 1;
    }

    Ok(RunResult {
        extinction,
        horizon: sim.horizon,
        snapshots,
        barrier_log: engine.barrier_log,
        absorbed_at_origin: engine.absorbed_at_origin,
        particle_steps: engine.particle_steps,
        rng_draws: engine.rng.draws(),
    })
}

/// Runs the trajectories with indices in `indices` (seed `mix(sim.seed, i)`)
/// and maps each outcome through `f`. Results are ordered by index no
/// matter how many workers are used.
pub fn map_runs<T, F>(
    initial: &ParticleConfiguration,
    sim: &SimConfig,
    law: &OffspringLaw,
    indices: Range<u64>,
    workers: usize,
    f: F,
) -> Vec<T>
where
    T: Send,
    F: Fn(u64, Result<RunResult>) -> T + Sync,
{
    let one = |i: u64| {
        let cfg = sim.clone().with_seed(mix(sim.seed, i));
        f(i, run(initial, &cfg, law))
    };
    if workers <= 1 {
        return indices.map(one).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    pool.install(|| indices.into_par_iter().map(one).collect())
}

/// `n_runs` independent trajectories; the first failing run (by index)
/// aborts the batch with its index attached.
pub fn run_batch(
    initial: &ParticleConfiguration,
    sim: &SimConfig,
    law: &OffspringLaw,
    n_runs: usize,
    workers: usize,
) -> Result<Vec<RunResult>> {
    if n_runs == 0 {
        return Err(Error::SimConfig("n_runs must be at least 1".into()));
    }
    map_runs(initial, sim, law, 0..n_runs as u64, workers, |i, r| {
        r.map_err(|e| Error::Run {
            index: i as usize,
            source: Box::new(e),
        })
    })
    .into_iter()
    .collect()
}

/// Monte Carlo estimate of `P(zeta > horizon)` with its binomial standard error.
pub fn survival_probability(
    initial: &ParticleConfiguration,
    sim: &SimConfig,
    law: &OffspringLaw,
    n_runs: usize,
    workers: usize,
) -> Result<(f64, f64)> {
    if n_runs == 0 {
        return Err(Error::SimConfig("n_runs must be at least 1".into()));
    }
    let outcomes = map_runs(initial, sim, law, 0..n_runs as u64, workers, |i, r| {
        r.map(|run| run.extinction == Extinction::Censored)
            .map_err(|e| Error::Run {
                index: i as usize,
                source: Box::new(e),
            })
    });
    let mut alive = 0usize;
    for o in outcomes {
        alive += o? as usize;
    }
    let n = n_runs as f64;
    let p = alive as f64 / n;
    Ok((p, (p * (1.0 - p) / n).sqrt()))
}
