//! Experiment drivers. Each is a pure function of its configuration and
//! seed; the worker count only changes how fast it runs.

use std::path::Path;

use anyhow::{bail, Result};
use serde::de::DeserializeOwned;

use crate::config;
use crate::report::Report;

pub mod calibration;
pub mod e1;
pub mod e5;
pub mod e6;
pub mod e7;
pub mod e8;
pub mod e9;
pub mod math;
pub mod yaglom;

pub struct RunContext<'a> {
    pub seed: u64,
    pub workers: usize,
    /// Where sample files go; nothing is written when `None`.
    pub out_dir: Option<&'a Path>,
}

/// Identifiers accepted by [`run_by_id`].
pub const IDS: [&str; 11] = [
    "math", "calibration", "E1", "E2", "E3", "E4", "E5", "E6", "E7", "E8", "E9",
];

fn load_with_seed<T: DeserializeOwned>(
    path: &Path,
    seed: Option<u64>,
    config_seed: impl Fn(&T) -> u64,
) -> Result<(T, u64)> {
    let cfg: T = config::load(path)?;
    let s = seed.unwrap_or_else(|| config_seed(&cfg));
    Ok((cfg, s))
}

/// Runs one experiment from its configuration file. `seed` overrides the
/// seed stored in the file.
pub fn run_by_id(
    id: &str,
    path: &Path,
    seed: Option<u64>,
    workers: usize,
    out_dir: Option<&Path>,
) -> Result<Report> {
    let id = id.to_ascii_uppercase();
    macro_rules! simple {
        ($ty:ty, $f:path) => {{
            let (cfg, s) = load_with_seed::<$ty>(path, seed, |c| c.seed)?;
            $f(&cfg, &RunContext { seed: s, workers, out_dir })
        }};
    }
    match id.as_str() {
        "MATH" => {
            let (cfg, s) = load_with_seed::<math::MathConfig>(path, seed, |c| c.seed)?;
            math::run(&cfg, s)
        }
        "CALIBRATION" => simple!(calibration::CalibrationConfig, calibration::run),
        "E1" => simple!(e1::E1Config, e1::run),
        "E2" | "E3" | "E4" => {
            let (cfg, s) = load_with_seed::<yaglom::YaglomConfig>(path, seed, |c| c.seed)?;
            let ctx = RunContext { seed: s, workers, out_dir };
            let batch = yaglom::sample(&cfg, &ctx)?;
            let mut report = match id.as_str() {
                "E2" => yaglom::overshoot_report(&cfg, &batch, s)?,
                "E3" => yaglom::size_report(&cfg, &batch, s)?,
                _ => yaglom::profile_report(&cfg, &batch, s, &ctx)?,
            };
            if let Some(dir) = out_dir {
                let name = yaglom::write_samples(&batch, dir)?;
                report.note(format!("wrote {name}"));
            }
            Ok(report)
        }
        "E5" => simple!(e5::E5Config, e5::run),
        "E6" => simple!(e6::E6Config, e6::run),
        "E7" => simple!(e7::E7Config, e7::run),
        "E8" => simple!(e8::E8Config, e8::run),
        "E9" => simple!(e9::E9Config, e9::run),
        other => bail!("unknown experiment {other}; expected one of {}", IDS.join(", ")),
    }
}
