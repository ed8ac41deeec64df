//! Runs conditioned on survival to `t`: the extinction overshoot, the size
//! and front of the population at `t`, and the particle profiles at an
//! intermediate time.

use std::f64::consts::PI;
use std::io::Write;

use anyhow::{bail, Result};
use bbm_core::model::{count_m, critical_constant, observable_z, rightmost_r};
use bbm_core::stats::{exp_mean_fit, histogram_on, ks_statistic, quantile, spearman, Sample};
use bbm_core::{CriticalCurve, OffspringLaw, SimConfig};
use serde::{Deserialize, Serialize};

use crate::experiments::RunContext;
use crate::report::{Report, Threshold};
use crate::sampling::{make_initial_config, mean_se, sample_conditioned, Rejection};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OvershootGates {
    pub ks_max: f64,
    pub mean_rel_tol: f64,
    pub censored_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeGates {
    pub ks_max: f64,
    pub gap_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileGates {
    pub chi_ks_max: f64,
    pub eta_ks_max: f64,
    pub min_pooled_particles: usize,
    pub bins: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YaglomConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub offspring: OffspringLaw,
    pub t: f64,
    pub dt: f64,
    pub target_z: f64,
    pub n_particles: usize,
    pub margin: f64,
    pub n_accept: usize,
    /// Prior guess of `P(zeta > t)`, used to check the rejection budget.
    pub prior_survival: f64,
    pub max_trials: u64,
    pub chunk: u64,
    /// Runs stop at `t + horizon_extension t^{2/3}`; later extinctions are censored.
    pub horizon_extension: f64,
    pub max_particles: usize,
    /// Profiles are taken at `profile_fraction * t`.
    pub profile_fraction: f64,
    pub overshoot: OvershootGates,
    pub size: SizeGates,
    pub profile: ProfileGates,
}

/// What is kept of each accepted run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub index: u64,
    /// `None` when the run outlived the extended horizon.
    pub zeta: Option<f64>,
    pub m_mid: usize,
    pub r_mid: f64,
    pub z_mid: f64,
    pub m_end: usize,
    pub r_end: f64,
    #[serde(skip)]
    pub positions_mid: Vec<f64>,
}

pub struct Batch {
    pub records: Vec<Record>,
    pub trials: u64,
    pub blowups: u64,
    pub initial_z: f64,
    pub initial_position: f64,
}

pub fn validate(cfg: &YaglomConfig) -> Result<()> {
    if !(cfg.prior_survival > 0.0 && cfg.prior_survival <= 1.0) {
        bail!("prior_survival must lie in (0, 1]");
    }
    let expected = cfg.n_accept as f64 / cfg.prior_survival;
    if (cfg.max_trials as f64) < expected {
        bail!(
            "rejection budget {} is below the expected {expected:.0} trials",
            cfg.max_trials
        );
    }
    if !(cfg.profile_fraction > 0.0 && cfg.profile_fraction < 1.0) {
        bail!("profile_fraction must lie in (0, 1)");
    }
    let gates = [
        cfg.overshoot.ks_max,
        cfg.overshoot.mean_rel_tol,
        cfg.overshoot.censored_max,
        cfg.size.ks_max,
        cfg.size.gap_max,
        cfg.profile.chi_ks_max,
        cfg.profile.eta_ks_max,
    ];
    if gates.iter().any(|g| !(*g > 0.0)) {
        bail!("thresholds must be positive");
    }
    Ok(())
}

pub fn sample(cfg: &YaglomConfig, ctx: &RunContext) -> Result<Batch> {
    validate(cfg)?;
    let t = cfg.t;
    let initial = make_initial_config(t, cfg.target_z, cfg.n_particles, cfg.margin)?;
    let curve = CriticalCurve::new(t, 0.0)?;
    let mid = cfg.profile_fraction * t;
    let horizon = t + cfg.horizon_extension * t.powf(2.0 / 3.0);
    let sim = SimConfig::new(cfg.dt, crate::sub_seed(ctx.seed, 1), horizon)
        .with_snapshots(vec![mid, t])
        .with_max_particles(cfg.max_particles);
    let rejection = Rejection {
        condition_time: Some(t),
        n_accept: cfg.n_accept,
        max_trials: cfg.max_trials,
        chunk: cfg.chunk,
    };
    let out = sample_conditioned(&initial, &sim, &cfg.offspring, rejection, ctx.workers, |i, run| {
        let at_mid = &run.snapshots[0];
        let at_end = &run.snapshots[1];
        Record {
            index: i,
            zeta: run.extinction_time(),
            m_mid: count_m(at_mid),
            r_mid: rightmost_r(at_mid).unwrap_or(f64::NAN),
            z_mid: observable_z(at_mid, &curve),
            m_end: count_m(at_end),
            r_end: rightmost_r(at_end).unwrap_or(f64::NAN),
            positions_mid: at_mid.positions().to_vec(),
        }
    })?;
    Ok(Batch {
        records: out.accepted,
        trials: out.trials,
        blowups: out.blowups,
        initial_z: observable_z(&initial, &curve),
        initial_position: initial.positions()[0],
    })
}

fn batch_info(report: &mut Report, batch: &Batch) {
    report.info("accepted", batch.records.len() as f64, None);
    report.info("trials", batch.trials as f64, None);
    report.info("acceptance_rate", batch.records.len() as f64 / batch.trials as f64, None);
    report.info("blowups", batch.blowups as f64, None);
    report.info("initial_z", batch.initial_z, None);
    report.info("initial_position", batch.initial_position, None);
}

/// Distribution of `t^{-2/3} (zeta - t)` against Exp(mean 3/c).
pub fn overshoot_report(cfg: &YaglomConfig, batch: &Batch, seed: u64) -> Result<Report> {
    let mut report = Report::new("E2", seed, cfg)?;
    batch_info(&mut report, batch);
    let t = cfg.t;
    let scale = t.powf(2.0 / 3.0);
    let mean_target = 3.0 / critical_constant();
    let values: Vec<f64> = batch
        .records
        .iter()
        .filter_map(|r| r.zeta.map(|z| (z - t) / scale))
        .collect();
    let censored = batch.records.len() - values.len();
    let censored_frac = censored as f64 / batch.records.len() as f64;
    report.gate(
        "censored_fraction",
        censored_frac,
        None,
        Threshold::Below { value: cfg.overshoot.censored_max },
    );
    report.gate_flag("overshoot_nonnegative", values.iter().all(|v| *v >= 0.0));
    let sample = Sample::new(values)?;
    let ks = ks_statistic(&sample, |x| if x <= 0.0 { 0.0 } else { -(-x / mean_target).exp_m1() })?;
    report.gate("overshoot_ks", ks, None, Threshold::Below { value: cfg.overshoot.ks_max });
    let fit = exp_mean_fit(&sample)?;
    report.info("overshoot_mean", fit.mean, Some((fit.ci95.1 - fit.ci95.0) / 3.92));
    report.info("overshoot_mean_target", mean_target, None);
    report.gate(
        "overshoot_mean_rel_error",
        (fit.mean / mean_target - 1.0).abs(),
        None,
        Threshold::Below { value: cfg.overshoot.mean_rel_tol },
    );
    Ok(report)
}

/// Size `M(t)` and rightmost position `R(t)` of the conditioned population.
pub fn size_report(cfg: &YaglomConfig, batch: &Batch, seed: u64) -> Result<Report> {
    let mut report = Report::new("E3", seed, cfg)?;
    batch_info(&mut report, batch);
    let t = cfg.t;
    let scale = t.powf(2.0 / 9.0);
    let c = critical_constant();
    let log_m: Vec<f64> = batch.records.iter().map(|r| (r.m_end as f64).ln()).collect();
    report.gate_flag("population_nonempty_at_t", batch.records.iter().all(|r| r.m_end >= 1));

    let w = Sample::new(log_m.iter().map(|l| l / scale).collect())?;
    let ks = ks_statistic(&w, |x| if x <= 0.0 { 0.0 } else { -(-x.powi(3) / (3.0 * c * c)).exp_m1() })?;
    report.gate("log_size_ks", ks, None, Threshold::Below { value: cfg.size.ks_max });
    let (mw, sw) = mean_se(w.values());
    report.info("log_size_scaled_mean", mw, Some(sw));
    // Mean of (3 c^2 V)^{1/3} with V ~ Exp(1) is (3 c^2)^{1/3} Gamma(4/3).
    report.info("log_size_scaled_limit_mean", (3.0 * c * c).cbrt() * 0.892_979_511_569_249_2, None);
    let r_scaled: Vec<f64> = batch.records.iter().map(|r| r.r_end / scale).collect();
    let (mr, sr) = mean_se(&r_scaled);
    report.info("front_scaled_mean", mr, Some(sr));

    let gaps: Vec<f64> = batch
        .records
        .iter()
        .zip(&log_m)
        .map(|(r, l)| (l - r.r_end).abs() / scale)
        .collect();
    let (mg, sg) = mean_se(&gaps);
    report.gate("size_front_gap", mg, Some(sg), Threshold::Below { value: cfg.size.gap_max });

    let paired: Vec<(f64, f64)> = batch
        .records
        .iter()
        .zip(&log_m)
        .filter_map(|(r, l)| r.zeta.map(|z| (*l, z - t)))
        .collect();
    let (a, b): (Vec<f64>, Vec<f64>) = paired.into_iter().unzip();
    let rho = spearman(&a, &b)?;
    report.gate("size_overshoot_rank_correlation", rho, None, Threshold::Above { value: 0.0 });
    Ok(report)
}

/// Pooled particle profiles at the intermediate time; each run carries total weight one.
pub fn profile_report(cfg: &YaglomConfig, batch: &Batch, seed: u64, ctx: &RunContext) -> Result<Report> {
    let mut report = Report::new("E4", seed, cfg)?;
    batch_info(&mut report, batch);
    let t = cfg.t;
    let s = cfg.profile_fraction * t;
    let level = CriticalCurve::new(t, 0.0)?.level(s)?;

    let mut chi_values = Vec::new();
    let mut chi_weights = Vec::new();
    let mut eta_values = Vec::new();
    let mut eta_front = Vec::new();
    let mut eta_weights = Vec::new();
    for r in &batch.records {
        let xs = &r.positions_mid;
        if xs.is_empty() {
            continue;
        }
        let top = r.r_mid;
        // Weights e^{x - R} avoid overflow; normalisation removes the shift.
        let raw: Vec<f64> = xs.iter().map(|x| (x - top).exp()).collect();
        let total: f64 = raw.iter().sum();
        for (&x, &w) in xs.iter().zip(&raw) {
            chi_values.push(x);
            chi_weights.push(1.0 / xs.len() as f64);
            eta_values.push(x / level);
            eta_front.push(x / top);
            eta_weights.push(w / total);
        }
    }
    let pooled = chi_values.len();
    report.info("pooled_particles", pooled as f64, None);
    report.gate(
        "pooled_particles_enough",
        pooled as f64,
        None,
        Threshold::Above { value: cfg.profile.min_pooled_particles as f64 - 0.5 },
    );

    let chi_cdf = |y: f64| if y <= 0.0 { 0.0 } else { 1.0 - (1.0 + y) * (-y).exp() };
    let eta_cdf = |y: f64| {
        if y <= 0.0 {
            0.0
        } else if y >= 1.0 {
            1.0
        } else {
            (1.0 - (PI * y).cos()) / 2.0
        }
    };
    let chi = Sample::weighted(chi_values, chi_weights)?;
    let eta = Sample::weighted(eta_values, eta_weights.clone())?;
    let eta_r = Sample::weighted(eta_front, eta_weights)?;
    let chi_ks = ks_statistic(&chi, chi_cdf)?;
    let eta_ks = ks_statistic(&eta, eta_cdf)?;
    report.gate("chi_ks", chi_ks, None, Threshold::Below { value: cfg.profile.chi_ks_max });
    report.gate("eta_ks", eta_ks, None, Threshold::Below { value: cfg.profile.eta_ks_max });
    report.info("eta_ks_front_normalised", ks_statistic(&eta_r, eta_cdf)?, None);

    // Centred size and front at the intermediate time, reported as bands.
    let ln_l = level.ln();
    let size_c: Vec<f64> = batch
        .records
        .iter()
        .filter(|r| r.m_mid > 0)
        .map(|r| (r.m_mid as f64).ln() - level + 3.0 * ln_l)
        .collect();
    let front_c: Vec<f64> = batch
        .records
        .iter()
        .filter(|r| r.m_mid > 0)
        .map(|r| r.r_mid - level + t.ln())
        .collect();
    for (name, v) in [("centred_log_size_mid", size_c), ("centred_front_mid", front_c)] {
        let smp = Sample::new(v)?;
        for p in [0.1, 0.5, 0.9] {
            report.info(&format!("{name}_q{p}"), quantile(&smp, p)?, None);
        }
    }
    let z_mid: Vec<f64> = batch.records.iter().map(|r| r.z_mid).collect();
    let (mz, sz) = mean_se(&z_mid);
    report.info("conditioned_z_mid_mean", mz, Some(sz));

    if let Some(dir) = ctx.out_dir {
        let bins = cfg.profile.bins;
        let chi_h = histogram_on(&chi, bins, 0.0, level)?;
        let eta_h = histogram_on(&eta, bins, 0.0, 1.0)?;
        let mut csv = String::from("profile,bin_lo,bin_hi,density,reference\n");
        for (k, d) in chi_h.density.iter().enumerate() {
            let (lo, hi) = (chi_h.edges[k], chi_h.edges[k + 1]);
            let reference = (chi_cdf(hi) - chi_cdf(lo)) / (hi - lo);
            csv.push_str(&format!("chi,{lo:.16e},{hi:.16e},{d:.16e},{reference:.16e}\n"));
        }
        for (k, d) in eta_h.density.iter().enumerate() {
            let (lo, hi) = (eta_h.edges[k], eta_h.edges[k + 1]);
            let reference = (eta_cdf(hi) - eta_cdf(lo)) / (hi - lo);
            csv.push_str(&format!("eta,{lo:.16e},{hi:.16e},{d:.16e},{reference:.16e}\n"));
        }
        let path = dir.join("E4_profiles.csv");
        std::fs::write(&path, csv)?;
        report.note(format!("wrote {}", path.file_name().unwrap_or_default().to_string_lossy()));
    }
    Ok(report)
}

/// One JSON line per accepted run.
pub fn write_samples(batch: &Batch, dir: &std::path::Path) -> Result<String> {
    let name = "conditioned_runs.jsonl";
    let mut file = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
    for r in &batch.records {
        writeln!(file, "{}", crate::json::to_line(r)?)?;
    }
    file.flush()?;
    Ok(name.to_string())
}
