//! Domain types and deterministic functionals of a particle configuration.
//!
//! Particles perform Brownian motion with drift `-1`, branch at rate
//! `beta = 1 / (2m)` where `m + 1` is the mean offspring number, and are
//! absorbed at the origin. The critical curve `L_t(s) = c (t - s)^{1/3}`
//! with `c = (3 pi^2 / 2)^{1/3}` and its shift `L_{t,A}(s) = L_t(s) - A`
//! define the weights used by every observable below.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

const PMF_SUM_TOL: f64 = 1e-12;
const ROOT_TOL: f64 = 1e-12;

/// `c = (3 pi^2 / 2)^{1/3}`.
pub fn critical_constant() -> f64 {
    (1.5 * PI * PI).cbrt()
}

/// Finite-support offspring distribution `(p_0, ..., p_K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OffspringLaw {
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    mean_offspring: f64,
    m: f64,
    beta: f64,
    q: f64,
    m2: f64,
}

impl OffspringLaw {
    pub fn new(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::InvalidLaw("empty pmf".into()));
        }
        if pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidLaw("pmf entries must be finite and nonnegative".into()));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOL {
            return Err(Error::InvalidLaw(format!("pmf sums to {total}, expected 1")));
        }
        let mean_offspring: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let m = mean_offspring - 1.0;
        if m <= 0.0 {
            return Err(Error::InvalidLaw(format!(
                "offspring mean {mean_offspring} is not supercritical"
            )));
        }
        let m2 = pmf
            .iter()
            .enumerate()
            .map(|(k, p)| (k * k.saturating_sub(1)) as f64 * p)
            .sum();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *cdf.last_mut().expect("nonempty") = 1.0;

        let mut law = Self {
            pmf,
            cdf,
            mean_offspring,
            m,
            beta: 0.5 / m,
            q: 0.0,
            m2,
        };
        law.q = law.extinction_root();
        Ok(law)
    }

    /// Binary branching, `p_2 = 1`.
    pub fn binary() -> Self {
        Self::new(vec![0.0, 0.0, 1.0]).expect("binary law is valid")
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn mean_offspring(&self) -> f64 {
        self.mean_offspring
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Extinction probability of the embedded Galton-Watson process.
    pub fn q(&self) -> f64 {
        self.q
    }

    /// Second factorial moment `E[L(L-1)]`.
    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// Probability generating function `f(s) = sum p_k s^k`.
    pub fn pgf(&self, s: f64) -> f64 {
        self.pmf.iter().rev().fold(0.0, |acc, p| acc * s + p)
    }

    /// Inverse-CDF draw from a uniform `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> usize {
        self.cdf.partition_point(|c| *c <= u).min(self.pmf.len() - 1)
    }

    fn extinction_root(&self) -> f64 {
        if self.pmf[0] == 0.0 {
            return 0.0;
        }
        // f(s) - s > 0 at 0 and < 0 just below 1 for a supercritical law.
        let g = |s: f64| self.pgf(s) - s;
        let (mut lo, mut hi) = (0.0_f64, 1.0 - 1e-12);
        while hi - lo > ROOT_TOL {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

impl TryFrom<Vec<f64>> for OffspringLaw {
    type Error = Error;

    fn try_from(pmf: Vec<f64>) -> Result<Self> {
        Self::new(pmf)
    }
}

impl From<OffspringLaw> for Vec<f64> {
    fn from(law: OffspringLaw) -> Self {
        law.pmf
    }
}

/// Particle positions at a time stamp. An empty configuration marks extinction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfiguration")]
pub struct ParticleConfiguration {
    time: f64,
    positions: Vec<f64>,
}

#[derive(Deserialize)]
struct RawConfiguration {
    time: f64,
    positions: Vec<f64>,
}

impl TryFrom<RawConfiguration> for ParticleConfiguration {
    type Error = Error;

    fn try_from(raw: RawConfiguration) -> Result<Self> {
        Self::new(raw.time, raw.positions)
    }
}

impl ParticleConfiguration {
    pub fn new(time: f64, positions: Vec<f64>) -> Result<Self> {
        if !time.is_finite() || time < 0.0 {
            return Err(Error::InvalidConfiguration(format!("time stamp {time} must be >= 0")));
        }
        if let Some(x) = positions.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::InvalidConfiguration(format!(
                "position {x} is not strictly positive"
            )));
        }
        Ok(Self { time, positions })
    }

    pub fn single(x: f64) -> Result<Self> {
        Self::new(0.0, vec![x])
    }

    pub fn extinct(time: f64) -> Self {
        Self {
            time,
            positions: Vec::new(),
        }
    }

    /// Positions already known to be valid (used by the simulator).
    pub(crate) fn from_valid(time: f64, positions: Vec<f64>) -> Self {
        Self { time, positions }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn into_positions(self) -> Vec<f64> {
        self.positions
    }

    pub fn is_extinct(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Union of two configurations sharing a time stamp.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.time != other.time {
            return Err(Error::InvalidConfiguration(
                "cannot merge configurations at different times".into(),
            ));
        }
        let mut positions = self.positions.clone();
        positions.extend_from_slice(&other.positions);
        Ok(Self::from_valid(self.time, positions))
    }
}

/// The shifted critical curve `L_{t,A}(s) = c (t - s)^{1/3} - A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalCurve {
    horizon: f64,
    offset: f64,
}

impl CriticalCurve {
    pub fn new(horizon: f64, offset: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(domain(format!("horizon {horizon} must be positive")));
        }
        if !(offset.is_finite() && offset >= 0.0) {
            return Err(domain(format!("offset {offset} must be nonnegative")));
        }
        Ok(Self { horizon, offset })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `t_A = t - (A/c)^3`, where the shifted curve reaches zero.
    pub fn t_a(&self) -> f64 {
        self.horizon - (self.offset / critical_constant()).powi(3)
    }

    /// `s_A = t - (2A/c)^3`; on `[0, s_A]` we have `A <= L_t(s) / 2`.
    pub fn s_a(&self) -> f64 {
        self.horizon - (2.0 * self.offset / critical_constant()).powi(3)
    }

    /// Unshifted level `L_t(s)`, extended by `cbrt` past the horizon.
    pub fn base_level_raw(&self, s: f64) -> f64 {
        critical_constant() * (self.horizon - s).cbrt()
    }

    /// Shifted level without domain checks; nonpositive outside `[0, t_A)`.
    pub fn level_raw(&self, s: f64) -> f64 {
        self.base_level_raw(s) - self.offset
    }

    /// `L_{t,A}(s)` for `0 <= s <= t_A`.
    pub fn level(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0 && s <= self.t_a()) {
            return Err(domain(format!(
                "time {s} outside [0, t_A = {}] for curve (t = {}, A = {})",
                self.t_a(),
                self.horizon,
                self.offset
            )));
        }
        Ok(self.level_raw(s).max(0.0))
    }

    /// `d/ds L_{t,A}(s) = -(c/3) (t - s)^{-2/3}`.
    pub fn slope(&self, s: f64) -> f64 {
        -critical_constant() / 3.0 * (self.horizon - s).powf(-2.0 / 3.0)
    }

    pub fn z(&self, s: f64, x: f64) -> f64 {
        weight_z_raw(self.level_raw(s), self.base_level_raw(s), x)
    }

    pub fn y(&self, s: f64, x: f64) -> f64 {
        let level = self.level_raw(s);
        if level <= 0.0 || !(0.0..=level).contains(&x) {
            return 0.0;
        }
        x / level * (x - self.base_level_raw(s)).exp()
    }

    pub fn y_tilde(&self, s: f64, x: f64) -> f64 {
        let level = self.level_raw(s);
        if level <= 0.0 || !(0.0..=level).contains(&x) {
            return 0.0;
        }
        (x - self.base_level_raw(s)).exp()
    }
}

/// `sin(pi x / L)` evaluated through the nearer endpoint so that `x` close
/// to `L` keeps full relative precision.
fn sine_profile(x: f64, level: f64) -> f64 {
    if x <= 0.5 * level {
        (PI * x / level).sin()
    } else {
        (PI * (level - x) / level).sin()
    }
}

fn weight_z_raw(level: f64, base_level: f64, x: f64) -> f64 {
    if level <= 0.0 || !(0.0..=level).contains(&x) {
        return 0.0;
    }
    level * sine_profile(x, level) * (x - base_level).exp()
}

/// `z_{t,A}(x, s) = L_{t,A}(s) sin(pi x / L_{t,A}(s)) e^{x - L_t(s)}` on
/// `[0, L_{t,A}(s)]`, zero elsewhere. The exponential always uses the
/// unshifted level.
pub fn weight_z(t: f64, offset: f64, s: f64, x: f64) -> f64 {
    let c = critical_constant();
    let base = c * (t - s).cbrt();
    weight_z_raw(base - offset, base, x)
}

/// `L_{t,A}(s)`, with a domain error past `t_A`.
pub fn curve_level(t: f64, offset: f64, s: f64) -> Result<f64> {
    CriticalCurve::new(t, offset)?.level(s)
}

/// `Z_{t,A}(s)` for a configuration at time stamp `s`. The observables fold
/// from `+0` so an extinct configuration reports `0` rather than `-0`.
pub fn observable_z(config: &ParticleConfiguration, curve: &CriticalCurve) -> f64 {
    let s = config.time();
    let level = curve.level_raw(s);
    let base = curve.base_level_raw(s);
    config
        .positions()
        .iter()
        .map(|&x| weight_z_raw(level, base, x))
        .fold(0.0, |acc, w| acc + w)
}

/// `Y_{t,A}(s)`.
pub fn observable_y(config: &ParticleConfiguration, curve: &CriticalCurve) -> f64 {
    let s = config.time();
    config.positions().iter().map(|&x| curve.y(s, x)).fold(0.0, |acc, w| acc + w)
}

/// `Y~_{t,A}(s)`.
pub fn observable_y_tilde(config: &ParticleConfiguration, curve: &CriticalCurve) -> f64 {
    let s = config.time();
    config.positions().iter().map(|&x| curve.y_tilde(s, x)).fold(0.0, |acc, w| acc + w)
}

/// `M(s)`, the number of particles.
pub fn count_m(config: &ParticleConfiguration) -> usize {
    config.len()
}

/// `R(s)`, the position of the right-most particle.
pub fn rightmost_r(config: &ParticleConfiguration) -> Result<f64> {
    config
        .positions()
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(Error::Extinct)
}

/// `V(s) = sum X e^X`, a martingale for the absorbed process.
pub fn observable_v(config: &ParticleConfiguration) -> f64 {
    config.positions().iter().map(|&x| x * x.exp()).fold(0.0, |acc, w| acc + w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn critical_constant_values() {
        let c = critical_constant();
        // Independent evaluation: exp(ln(1.5 pi^2) / 3).
        let oracle = ((1.5 * PI * PI).ln() / 3.0).exp();
        assert!((c - oracle).abs() < 1e-14, "{c}");
        assert!((c - 2.455_445_7).abs() < 1e-7, "{c}");
        assert!((3.0 / c - 1.221_774_1).abs() < 1e-7);
        assert!(((3.0 * c * c).cbrt() - 2.624_987_9).abs() < 1e-7);
        assert!((c.powi(3) - 1.5 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn extinct_observables_are_positive_zero() {
        let curve = CriticalCurve::new(100.0, 0.0).unwrap();
        let empty = ParticleConfiguration::new(1.0, vec![]).unwrap();
        for v in [observable_z(&empty, &curve), observable_y(&empty, &curve), observable_v(&empty)] {
            assert!(v == 0.0 && v.is_sign_positive());
        }
    }

    #[test]
    fn curve_levels() {
        assert_eq!(curve_level(64.0, 0.0, 64.0).unwrap(), 0.0);
        let l = curve_level(1000.0, 0.0, 0.0).unwrap();
        assert!((l - 10.0 * critical_constant()).abs() < 1e-12);
        assert!((l - 24.5545).abs() < 1e-4);
        assert!(curve_level(100.0, 2.0, 99.9).is_err());
        assert!(curve_level(100.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn curve_decreasing_by_finite_differences() {
        for &(t, a) in &[(64.0, 0.0), (1000.0, 2.0), (125.0, 1.0)] {
            let curve = CriticalCurve::new(t, a).unwrap();
            let ta = curve.t_a();
            let n = 1000;
            let h = ta / n as f64;
            for i in 0..n {
                let s0 = i as f64 * h;
                let diff = curve.level(s0 + h).unwrap() - curve.level(s0).unwrap();
                assert!(diff < 0.0, "t={t} A={a} s={s0}");
            }
        }
    }

    #[test]
    fn weight_z_edges() {
        let (t, s) = (125.0, 10.0);
        let l = curve_level(t, 0.0, s).unwrap();
        assert_eq!(weight_z(t, 0.0, s, 0.0), 0.0);
        assert!(weight_z(t, 0.0, s, l).abs() < 1e-14);
        let mid = weight_z(t, 0.0, s, l / 2.0);
        assert!((mid - l * (-l / 2.0).exp()).abs() < 1e-14 * mid.max(1.0));
        assert_eq!(weight_z(t, 0.0, s, l + 0.1), 0.0);
        assert_eq!(weight_z(t, 0.0, s, -0.1), 0.0);
        // Exponent uses the unshifted level.
        let a = 1.5;
        let la = l - a;
        let want = la * (PI * 2.0 / la).sin() * (2.0 - l).exp();
        assert!((weight_z(t, a, s, 2.0) - want).abs() < 1e-15);
    }

    #[test]
    fn weight_z_near_top_keeps_relative_precision() {
        let (t, s) = (1000.0, 0.0);
        let l = curve_level(t, 0.0, s).unwrap();
        let d = 1e-9;
        let got = weight_z(t, 0.0, s, l - d);
        let want = l * (PI * d / l) * (-d).exp();
        assert!(((got - want) / want).abs() < 1e-6, "{got} {want}");
    }

    #[test]
    fn detz_sandwich_on_grid() {
        for &t in &[8.0, 64.0, 125.0, 1000.0] {
            let l = curve_level(t, 0.0, 0.0).unwrap();
            for i in 0..=400 {
                let x = l * i as f64 / 400.0;
                let z = weight_z(t, 0.0, 0.0, x);
                let base = x.min(l - x).max(0.0) * (x - l).exp();
                assert!(2.0 * base <= z + 1e-14, "t={t} x={x}");
                assert!(z <= PI * base + 1e-14, "t={t} x={x}");
            }
        }
    }

    #[test]
    fn single_particle_weight_decreases_in_horizon() {
        // Single-particle form of the monotonicity of t -> Z_t(0).
        for &x in &[0.5, 2.0, 5.0, 9.0] {
            let mut prev = f64::INFINITY;
            let mut t = ((x + 2.0) / critical_constant()).powi(3);
            for _ in 0..2000 {
                let z = weight_z(t, 0.0, 0.0, x);
                assert!(z <= prev, "x={x} t={t}");
                prev = z;
                t *= 1.003;
            }
        }
    }

    #[test]
    fn observables_of_small_configs() {
        let curve = CriticalCurve::new(64.0, 0.0).unwrap();
        let empty = ParticleConfiguration::extinct(0.0);
        assert_eq!(observable_z(&empty, &curve), 0.0);
        assert_eq!(count_m(&empty), 0);
        assert_eq!(rightmost_r(&empty), Err(Error::Extinct));

        let one = ParticleConfiguration::single(3.0).unwrap();
        assert_eq!(observable_z(&one, &curve), weight_z(64.0, 0.0, 0.0, 3.0));
        assert_eq!(rightmost_r(&one).unwrap(), 3.0);
        assert!((observable_v(&one) - 3.0 * 3f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn offspring_law_binary() {
        let law = OffspringLaw::binary();
        assert_eq!(law.m(), 1.0);
        assert_eq!(law.beta(), 0.5);
        assert_eq!(law.beta() * law.m(), 0.5);
        assert_eq!(law.q(), 0.0);
        assert_eq!(law.m2(), 2.0);
        assert_eq!(law.sample(0.0), 2);
        assert_eq!(law.sample(0.999_999), 2);
    }

    #[test]
    fn offspring_law_with_death() {
        // f(s) = 0.25 + 0.75 s^2 has roots 1/3 and 1.
        let law = OffspringLaw::new(vec![0.25, 0.0, 0.75]).unwrap();
        assert!((law.q() - 1.0 / 3.0).abs() < 1e-11);
        assert!((law.pgf(law.q()) - law.q()).abs() < 1e-12);
        assert!((law.m() - 0.5).abs() < 1e-15);
        assert_eq!(law.beta() * law.m(), 0.5);
        assert_eq!(law.sample(0.1), 0);
        assert_eq!(law.sample(0.3), 2);
    }

    #[test]
    fn offspring_law_rejections() {
        assert!(OffspringLaw::new(vec![]).is_err());
        assert!(OffspringLaw::new(vec![0.5, 0.4]).is_err());
        assert!(OffspringLaw::new(vec![0.0, 1.0]).is_err());
        assert!(OffspringLaw::new(vec![0.5, 0.0, 0.5]).is_err());
        assert!(OffspringLaw::new(vec![-0.1, 0.1, 1.0]).is_err());
    }

    #[test]
    fn law_json_is_a_plain_array() {
        let law = OffspringLaw::new(vec![0.1, 0.2, 0.7]).unwrap();
        let json = serde_json::to_string(&law).unwrap();
        assert_eq!(json, "[0.1,0.2,0.7]");
        let back: OffspringLaw = serde_json::from_str(&json).unwrap();
        assert_eq!(back, law);
        assert!(serde_json::from_str::<OffspringLaw>("[0.5,0.5]").is_err());
    }

    #[test]
    fn configuration_json_validates() {
        let json = r#"{"time": 1.5, "positions": [1.0, 2.5]}"#;
        let cfg: ParticleConfiguration = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.time(), 1.5);
        assert_eq!(cfg.positions(), &[1.0, 2.5]);
        assert!(serde_json::from_str::<ParticleConfiguration>(
            r#"{"time": 0.0, "positions": [1.0, 0.0]}"#
        )
        .is_err());
    }

    fn config_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..12.0, 0..30)
    }

    proptest! {
        #[test]
        fn y_below_y_tilde(xs in config_strategy(), a in 0.0f64..3.0, s in 0.0f64..60.0) {
            let curve = CriticalCurve::new(125.0, a).unwrap();
            let cfg = ParticleConfiguration::new(s, xs).unwrap();
            prop_assert!(observable_y(&cfg, &curve) <= observable_y_tilde(&cfg, &curve));
        }

        #[test]
        fn weights_nonnegative_and_supported(x in -5.0f64..30.0, a in 0.0f64..3.0, s in 0.0f64..100.0) {
            let z = weight_z(125.0, a, s, x);
            let level = CriticalCurve::new(125.0, a).unwrap().level_raw(s);
            prop_assert!(z >= 0.0);
            if x < 0.0 || x > level {
                prop_assert_eq!(z, 0.0);
            }
        }

        #[test]
        fn observables_additive(xs in config_strategy(), ys in config_strategy(), a in 0.0f64..2.0) {
            let curve = CriticalCurve::new(64.0, a).unwrap();
            let p = ParticleConfiguration::new(3.0, xs).unwrap();
            let q = ParticleConfiguration::new(3.0, ys).unwrap();
            let pq = p.concat(&q).unwrap();
            let close = |u: f64, v: f64| (u - v).abs() <= 1e-12 * (1.0 + u.abs());
            prop_assert!(close(observable_z(&pq, &curve), observable_z(&p, &curve) + observable_z(&q, &curve)));
            prop_assert!(close(observable_y(&pq, &curve), observable_y(&p, &curve) + observable_y(&q, &curve)));
            prop_assert!(close(observable_y_tilde(&pq, &curve), observable_y_tilde(&p, &curve) + observable_y_tilde(&q, &curve)));
            prop_assert_eq!(count_m(&pq), count_m(&p) + count_m(&q));
        }
    }
}
