//! Predicted remaining survival time of a configuration.
//!
//! For a configuration at time `s` the prediction is
//! `T = inf{t : L_{s+t}(s) >= R(s) + 2 and Z_{s+t}(s) <= 1/2}`. Since
//! `L_{s+t}(s) = c t^{1/3}` only the positions matter. On the set where
//! the first constraint holds every particle sits at least 2 below the
//! level, where each single-particle weight is decreasing in `t`, so the
//! second constraint is a monotone condition and bisection finds the
//! infimum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{critical_constant, rightmost_r, weight_z, ParticleConfiguration};

const MAX_DOUBLINGS: u32 = 60;
const REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub time: f64,
    /// True when `time` is the root of `Z = 1/2`, false when the level
    /// constraint alone is binding.
    pub unique_root: bool,
    pub bracket: (f64, f64),
}

/// `Z_{s+t}(s)` for the given positions, as a function of the lead time `t`.
pub fn lead_weight(positions: &[f64], t: f64) -> f64 {
    positions.iter().map(|&x| weight_z(t, 0.0, 0.0, x)).sum()
}

pub fn predict_survival_time(config: &ParticleConfiguration) -> Result<Prediction> {
    let r = rightmost_r(config)?;
    let positions = config.positions();
    let t_min = ((r + 2.0) / critical_constant()).powi(3);
    let z = |t: f64| lead_weight(positions, t);

    if z(t_min) <= 0.5 {
        return Ok(Prediction {
            time: t_min,
            unique_root: false,
            bracket: (t_min, t_min),
        });
    }

    let mut lo = t_min;
    let mut hi = 2.0 * t_min;
    let mut doublings = 0;
    while z(hi) > 0.5 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::Internal(format!(
                "failed to bracket Z = 1/2 below t = {hi}"
            )));
        }
    }
    let bracket = (lo, hi);
    // Invariant: z(lo) > 1/2 >= z(hi). Ties go to the smaller time.
    while hi - lo > REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if z(mid) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Prediction {
        time: hi,
        unique_root: true,
        bracket,
    })
}
