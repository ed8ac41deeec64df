//! Heat kernel of Brownian motion killed outside the unit strip, the
//! leading-order density of a particle killed at `0` and at the moving
//! curve `L_{t,A}`, and first/second moment oracles built from them.
//!
//! The strip kernel
//! `w_s(x, y) = 2 sum_{n >= 1} exp(-pi^2 n^2 s / 2) sin(n pi x) sin(n pi y)`
//! is evaluated either from this Fourier series or from the image series
//! `sum_n [phi_s(y - x + 2n) - phi_s(y + x + 2n)]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::{critical_constant, CriticalCurve};
use crate::quadrature;

/// Below this diffusion time the Fourier series is replaced by images.
pub const FOURIER_MIN_TIME: f64 = 0.05;
/// Fourier evaluation is never attempted at or below this time.
pub const FOURIER_HARD_MIN: f64 = 1e-6;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_KAPPA: f64 = 5.0;
pub const DEFAULT_Y_CONSTANT: f64 = 10.0;

const TAU_TOL: f64 = 1e-10;

fn check_query(s: f64, x: f64, y: f64, tol: f64) -> Result<()> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(domain(format!("diffusion time {s} must be positive")));
    }
    if !((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)) {
        return Err(domain(format!("points ({x}, {y}) must lie in [0, 1]")));
    }
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(domain(format!("tolerance {tol} must lie in (0, 1e-3]")));
    }
    Ok(())
}

/// Fourier series, truncated once `2 sum_{n > N} e^{-pi^2 n^2 s / 2} < tol`.
pub fn strip_kernel_fourier(s: f64, x: f64, y: f64, tol: f64) -> Result<f64> {
    check_query(s, x, y, tol)?;
    if s <= FOURIER_HARD_MIN {
        return strip_kernel_images(s, x, y, tol);
    }
    let a = 0.5 * PI * PI * s;
    let mut sum = 0.0;
    let mut n = 1u64;
    loop {
        let nf = n as f64;
        sum += (-a * nf * nf).exp() * (nf * PI * x).sin() * (nf * PI * y).sin();
        // Terms beyond n decay at least geometrically with ratio e^{-a(2n+3)}.
        let next = nf + 1.0;
        let tail = (-a * next * next).exp() / -(-a * (2.0 * next + 1.0)).exp_m1();
        if 2.0 * tail < tol {
            break;
        }
        n += 1;
    }
    Ok(2.0 * sum)
}

fn gaussian_density(s: f64, z: f64) -> f64 {
    (-z * z / (2.0 * s)).exp() / (2.0 * PI * s).sqrt()
}

/// Image series for the strip, summed symmetrically in `n` until both new
/// terms fall below `tol * 1e-3`.
pub fn strip_kernel_images(s: f64, x: f64, y: f64, tol: f64) -> Result<f64> {
    check_query(s, x, y, tol)?;
    let term = |n: f64| gaussian_density(s, y - x + 2.0 * n) - gaussian_density(s, y + x + 2.0 * n);
    let cutoff = tol * 1e-3;
    let mut sum = term(0.0);
    let mut n = 1.0;
    loop {
        let up = term(n);
        let down = term(-n);
        sum += up + down;
        // Once the shift dominates the spread every later term is smaller.
        if up.abs() < cutoff && down.abs() < cutoff && 2.0 * n > 2.0 + (s).sqrt() {
            break;
        }
        n += 1.0;
    }
    Ok(sum)
}

/// `w_s(x, y)` with the Fourier/image switch at `s = 0.05`.
pub fn strip_kernel(s: f64, x: f64, y: f64, tol: f64) -> Result<f64> {
    if s >= FOURIER_MIN_TIME {
        strip_kernel_fourier(s, x, y, tol)
    } else {
        strip_kernel_images(s, x, y, tol)
    }
}

/// `D(s) = sum_{n >= 2} n^2 e^{-pi^2 (n^2 - 1) s / 2}`, which bounds
/// `|w_s(x, y) / v_s(x, y) - 1|` with `v_s = 2 e^{-pi^2 s/2} sin(pi x) sin(pi y)`.
pub fn ground_state_error(s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(domain(format!("diffusion time {s} must be positive")));
    }
    let a = 0.5 * PI * PI * s;
    let mut sum = 0.0;
    let mut n = 2.0_f64;
    loop {
        let term = n * n * (-a * (n * n - 1.0)).exp();
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
        n += 1.0;
    }
    Ok(sum)
}

/// Arguments of the moving-boundary density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryQuery {
    pub t: f64,
    pub offset: f64,
    pub r: f64,
    pub s: f64,
    pub x: f64,
    pub y: f64,
}

/// Value together with the band it is known to within.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Banded {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Banded {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

fn check_times(curve: &CriticalCurve, r: f64, s: f64, s_max: f64, what: &str) -> Result<()> {
    if !(r >= 0.0 && r <= s && s <= s_max) {
        return Err(domain(format!(
            "need 0 <= r <= s <= {what} = {s_max}, got r = {r}, s = {s} (t = {}, A = {})",
            curve.horizon(),
            curve.offset()
        )));
    }
    Ok(())
}

fn tau_unchecked(curve: &CriticalCurve, r: f64, s: f64) -> Result<f64> {
    if r == s {
        return Ok(0.0);
    }
    if curve.offset() == 0.0 {
        return Ok(2.0 / (PI * PI) * (curve.base_level_raw(r) - curve.base_level_raw(s)));
    }
    quadrature::integrate(
        |u| {
            let l = curve.level_raw(u);
            1.0 / (l * l)
        },
        r,
        s,
        TAU_TOL,
    )
}

/// `tau_A(r, s) = int_r^s L_{t,A}(u)^{-2} du` for `0 <= r <= s <= s_A`.
pub fn tau(t: f64, offset: f64, r: f64, s: f64) -> Result<f64> {
    let curve = CriticalCurve::new(t, offset)?;
    check_times(&curve, r, s, curve.s_a(), "s_A")?;
    tau_unchecked(&curve, r, s)
}

/// `tau_0(r, s) = (2 / pi^2) (L_t(r) - L_t(s))`.
fn tau_zero(curve: &CriticalCurve, r: f64, s: f64) -> f64 {
    2.0 / (PI * PI) * (curve.base_level_raw(r) - curve.base_level_raw(s))
}

/// Leading-order density at `y` at time `s` of a Brownian particle started
/// at `x` at time `r`, killed at `0` and at `L_{t,A}`:
/// `(L_{t,A}(r) L_{t,A}(s))^{-1/2} w_{tau_A(r,s)}(x / L_{t,A}(r), y / L_{t,A}(s))`.
/// The true density differs by a factor `e^{O((t-s)^{-1/3})}`.
pub fn moving_density_q(q: &BoundaryQuery) -> Result<f64> {
    let curve = CriticalCurve::new(q.t, q.offset)?;
    let t_a = curve.t_a();
    if !(q.r >= 0.0 && q.r < q.s && q.s < t_a) {
        return Err(domain(format!(
            "need 0 <= r < s < t_A = {t_a}, got r = {}, s = {}",
            q.r, q.s
        )));
    }
    let lr = curve.level_raw(q.r);
    let ls = curve.level_raw(q.s);
    if !((0.0..=lr).contains(&q.x) && (0.0..=ls).contains(&q.y)) {
        return Err(domain(format!(
            "need x in [0, {lr}] and y in [0, {ls}], got x = {}, y = {}",
            q.x, q.y
        )));
    }
    let tau = tau_unchecked(&curve, q.r, q.s)?;
    let w = strip_kernel(tau, (q.x / lr).min(1.0), (q.y / ls).min(1.0), DEFAULT_TOL)?;
    Ok(w / (lr * ls).sqrt())
}

/// Expected particle density with drift `-1` and branching:
/// `p = e^{x - y} q`.
pub fn branching_density_p(q: &BoundaryQuery) -> Result<f64> {
    Ok((q.x - q.y).exp() * moving_density_q(q)?)
}

fn oracle_curve(t: f64, offset: f64, r: f64, s: f64, x: f64) -> Result<CriticalCurve> {
    let curve = CriticalCurve::new(t, offset)?;
    check_times(&curve, r, s, curve.s_a(), "s_A")?;
    let lr = curve.level_raw(r);
    if !(0.0..=lr).contains(&x) {
        return Err(domain(format!("x = {x} outside [0, L_(t,A)(r) = {lr}]")));
    }
    Ok(curve)
}

/// Leading-order `E_(x,r)[Z_{t,A}(s)] = ((t-s)/(t-r))^{2A/3 + 1/2} z_{t,A}(x, r)`,
/// with the multiplicative band `exp(+-kappa (1 v A^2) (t-s)^{-1/3})`.
pub fn oracle_ez(t: f64, offset: f64, r: f64, s: f64, x: f64, kappa: f64) -> Result<Banded> {
    let curve = oracle_curve(t, offset, r, s, x)?;
    let value = ((t - s) / (t - r)).powf(2.0 * offset / 3.0 + 0.5) * curve.z(r, x);
    let band = (kappa * offset.powi(2).max(1.0) * (t - s).powf(-1.0 / 3.0)).exp();
    Ok(Banded {
        value,
        lower: value / band,
        upper: value * band,
    })
}

/// Expected number of particles absorbed at `L_{t,A}` during `[r, s]`.
/// The main term is `pi e^A (tau_0(r,s) / L_t(r)) z_{t,A}(x, r)`. The band
/// adds `C y_{t,A}(x, r)` on either side, the factor
/// `exp(+-kappa (1 v A^2) (t-s)^{-1/3})`, and on the lower side the factor
/// `((t-s)/(t-r))^{2A/3 + 1/6}` separating the two sides of the estimate.
pub fn oracle_er(
    t: f64,
    offset: f64,
    r: f64,
    s: f64,
    x: f64,
    kappa: f64,
    y_constant: f64,
) -> Result<Banded> {
    let curve = oracle_curve(t, offset, r, s, x)?;
    let value = PI * offset.exp() * tau_zero(&curve, r, s) / curve.base_level_raw(r) * curve.z(r, x);
    let slack = y_constant * curve.y(r, x);
    let band = (kappa * offset.powi(2).max(1.0) * (t - s).powf(-1.0 / 3.0)).exp();
    let sandwich = ((t - s) / (t - r)).powf(2.0 * offset / 3.0 + 1.0 / 6.0);
    Ok(Banded {
        value,
        lower: (value - slack).max(0.0) / band * sandwich,
        upper: (value + slack) * band,
    })
}

fn second_moment_shape(t: f64, offset: f64, r: f64, s: f64, x: f64) -> Result<f64> {
    let curve = oracle_curve(t, offset, r, s, x)?;
    Ok(tau_zero(&curve, r, s) / curve.base_level_raw(r) * curve.z(r, x) + curve.y(r, x))
}

/// `e^{-A} (tau_0(r,s) / L_t(r) z_{t,A}(x,r) + y_{t,A}(x,r))`, the shape of
/// the second-moment bound for `Z_{t,A}(s)` without its constant.
pub fn bound_ez2(t: f64, offset: f64, r: f64, s: f64, x: f64) -> Result<f64> {
    Ok((-offset).exp() * second_moment_shape(t, offset, r, s, x)?)
}

/// `e^{A} (...)`, the same shape for the absorbed count.
pub fn bound_er2(t: f64, offset: f64, r: f64, s: f64, x: f64) -> Result<f64> {
    Ok(offset.exp() * second_moment_shape(t, offset, r, s, x)?)
}

/// `(2/pi^2) (L_t(r) - L_t(s) + (2A/3) log((t-r)/(t-s)))`, the expansion of
/// `tau_A(r, s)` up to `O(A^2 (t-s)^{-1/3})`.
pub fn tau_expansion(t: f64, offset: f64, r: f64, s: f64) -> f64 {
    let c = critical_constant();
    2.0 / (PI * PI)
        * (c * (t - r).cbrt() - c * (t - s).cbrt() + 2.0 * offset / 3.0 * ((t - r) / (t - s)).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::weight_z;
    use crate::quadrature::{gauss_legendre, integrate};

    #[test]
    fn query_validation() {
        assert!(strip_kernel_fourier(0.0, 0.5, 0.5, 1e-10).is_err());
        assert!(strip_kernel_fourier(1.0, 1.5, 0.5, 1e-10).is_err());
        assert!(strip_kernel_images(1.0, 0.5, 0.5, 0.1).is_err());
        // Tiny times route to images without error.
        let w = strip_kernel_fourier(1e-7, 0.5, 0.5, 1e-10).unwrap();
        assert!((w - gaussian_density(1e-7, 0.0)).abs() < 1e-6 * w);
    }

    #[test]
    fn sine_projection() {
        let (s, x) = (0.3, 0.25);
        let v = gauss_legendre(
            |y| (PI * y).sin() * strip_kernel_fourier(s, x, y, 1e-14).unwrap(),
            0.0,
            1.0,
            64,
        );
        let want = (-PI * PI * s / 2.0).exp() * (PI * x).sin();
        assert!((v - want).abs() < 1e-10, "{v} {want}");
    }

    #[test]
    fn symmetries() {
        for &s in &[0.01, 0.1, 1.0] {
            for i in 0..=10 {
                for j in 0..=10 {
                    let (x, y) = (i as f64 / 10.0, j as f64 / 10.0);
                    let w = strip_kernel(s, x, y, 1e-14).unwrap();
                    assert!((w - strip_kernel(s, y, x, 1e-14).unwrap()).abs() < 1e-12);
                    assert!((w - strip_kernel(s, 1.0 - x, 1.0 - y, 1e-14).unwrap()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fourier_and_images_agree() {
        let w1 = strip_kernel_fourier(0.1, 0.3, 0.7, 1e-13).unwrap();
        let w2 = strip_kernel_images(0.1, 0.3, 0.7, 1e-13).unwrap();
        assert!((w1 - w2).abs() < 1e-10);
        for &s in &[1e-3, 5e-3, 0.02, 0.05, 0.3, 1.0, 5.0] {
            for &x in &[0.01, 0.2, 0.5, 0.77, 0.99] {
                for &y in &[0.0, 0.1, 0.45, 0.9, 1.0] {
                    let a = strip_kernel_fourier(s, x, y, 1e-13).unwrap();
                    let b = strip_kernel_images(s, x, y, 1e-13).unwrap();
                    assert!((a - b).abs() < 1e-10, "s={s} x={x} y={y}: {a} {b}");
                }
            }
        }
    }

    #[test]
    fn ground_state_dominates_at_large_time() {
        let s = 3.0;
        let d = ground_state_error(s).unwrap();
        for &(x, y) in &[(0.5, 0.5), (0.2, 0.7), (0.1, 0.9)] {
            let v = 2.0 * (-PI * PI * s / 2.0).exp() * (PI * x).sin() * (PI * y).sin();
            let w = strip_kernel_images(s, x, y, 1e-14).unwrap();
            assert!((w / v - 1.0).abs() <= d + 1e-9, "{} {d}", w / v - 1.0);
        }
    }

    #[test]
    fn mass_is_subprobability() {
        for &s in &[1e-4, 1e-3, 0.01, 0.1, 1.0] {
            let mass = integrate(|y| strip_kernel(s, 0.5, y, 1e-13).unwrap(), 0.0, 1.0, 1e-11).unwrap();
            assert!(mass <= 1.0 + 1e-9);
            if s <= 1e-3 {
                assert!(mass > 1.0 - 1e-9, "s={s} mass={mass}");
            }
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        for &(u, v, x, y) in &[(0.05, 0.1, 0.3, 0.6), (0.2, 0.3, 0.5, 0.1), (0.07, 0.5, 0.9, 0.9)] {
            let lhs = integrate(
                |z| strip_kernel(u, x, z, 1e-14).unwrap() * strip_kernel(v, z, y, 1e-14).unwrap(),
                0.0,
                1.0,
                1e-11,
            )
            .unwrap();
            let rhs = strip_kernel(u + v, x, y, 1e-14).unwrap();
            assert!((lhs - rhs).abs() < 1e-8, "{lhs} {rhs}");
        }
    }

    #[test]
    fn tau_values() {
        assert_eq!(tau(1000.0, 1.0, 200.0, 200.0).unwrap(), 0.0);
        let c = critical_constant();
        let (t, r, s): (f64, f64, f64) = (1000.0, 100.0, 600.0);
        let want = 3.0 / (c * c) * ((t - r).cbrt() - (t - s).cbrt());
        assert!((tau(t, 0.0, r, s).unwrap() - want).abs() < 1e-14);
        // Quadrature agrees with the closed form when forced through it.
        let curve = CriticalCurve::new(t, 0.0).unwrap();
        let quad = integrate(|u| curve.level_raw(u).powi(-2), r, s, 1e-12).unwrap();
        assert!((quad - want).abs() < 1e-10);
        assert!(tau(t, 2.0, 0.0, 999.0).is_err());
        assert!(tau(t, 0.0, 10.0, 5.0).is_err());
    }

    #[test]
    fn tau_grid_properties() {
        let t = 1000.0;
        for &a in &[0.5, 1.0, 2.0, 3.0] {
            let curve = CriticalCurve::new(t, a).unwrap();
            let s_a = curve.s_a();
            let mut prev = 0.0;
            for k in 1..=20 {
                let s = if k == 20 { s_a } else { s_a * k as f64 / 20.0 };
                let ta = tau(t, a, 0.0, s).unwrap();
                let t0 = tau(t, 0.0, 0.0, s).unwrap();
                assert!(ta >= t0 && ta > prev);
                prev = ta;
                let remainder = 10.0 * a * a * (t - s).powf(-1.0 / 3.0) * 2.0 / (PI * PI);
                assert!((ta - tau_expansion(t, a, 0.0, s)).abs() <= remainder, "a={a} s={s}");
            }
        }
    }

    #[test]
    fn density_vanishes_at_edges() {
        let (t, a, r, s) = (1000.0, 1.0, 0.0, 300.0);
        let curve = CriticalCurve::new(t, a).unwrap();
        let x = 0.5 * curve.level_raw(r);
        let top = curve.level_raw(s);
        for y in [0.0, top] {
            let q = BoundaryQuery { t, offset: a, r, s, x, y };
            assert!(moving_density_q(&q).unwrap().abs() < 1e-12);
        }
        let inside = BoundaryQuery { t, offset: a, r, s, x, y: 0.3 * top };
        assert!(branching_density_p(&inside).unwrap() > 0.0);
        let same = BoundaryQuery { y: x.min(top), ..inside };
        assert_eq!(branching_density_p(&same).unwrap(), moving_density_q(&same).unwrap());
        assert!(moving_density_q(&BoundaryQuery { y: top + 0.1, ..inside }).is_err());
        assert!(moving_density_q(&BoundaryQuery { s: r, ..inside }).is_err());
    }

    #[test]
    fn density_mass_is_near_one_far_from_horizon() {
        // (t - s)^{-1/3} <= 0.05 once t - s >= 8000.
        let (t, a, r, s) = (20000.0, 0.0, 0.0, 10.0);
        let curve = CriticalCurve::new(t, a).unwrap();
        let x = 0.5 * curve.level_raw(r);
        let top = curve.level_raw(s);
        let mass = integrate(
            |y| moving_density_q(&BoundaryQuery { t, offset: a, r, s, x, y }).unwrap(),
            0.0,
            top,
            1e-10,
        )
        .unwrap();
        assert!(mass <= 1.05, "{mass}");
        assert!(mass > 0.5);
    }

    #[test]
    fn ez_oracle_matches_quadrature_identity() {
        let (t, r, s) = (1000.0, 0.0, 500.0);
        let curve = CriticalCurve::new(t, 0.0).unwrap();
        let x = 0.5 * curve.level_raw(r);
        let oracle = oracle_ez(t, 0.0, r, s, x, DEFAULT_KAPPA).unwrap();
        let z = weight_z(t, 0.0, r, x);
        assert!((oracle.value - 0.5f64.sqrt() * z).abs() < 1e-14 * z);
        let top = curve.level_raw(s);
        let quad = integrate(
            |y| {
                branching_density_p(&BoundaryQuery { t, offset: 0.0, r, s, x, y }).unwrap()
                    * weight_z(t, 0.0, s, y)
            },
            0.0,
            top,
            1e-14,
        )
        .unwrap();
        assert!((quad / oracle.value - 1.0).abs() < 1e-6, "{quad} {}", oracle.value);
        assert!(oracle.lower < oracle.value && oracle.value < oracle.upper);
    }

    #[test]
    fn ez_oracle_at_equal_times_is_the_weight() {
        let o = oracle_ez(125.0, 1.0, 20.0, 20.0, 3.0, DEFAULT_KAPPA).unwrap();
        assert!((o.value - weight_z(125.0, 1.0, 20.0, 3.0)).abs() < 1e-15);
    }

    #[test]
    fn er_oracle_shape() {
        let (t, a) = (1000.0, 2.0);
        let x = 10.0;
        assert_eq!(oracle_er(t, a, 0.0, 0.0, x, DEFAULT_KAPPA, DEFAULT_Y_CONSTANT).unwrap().value, 0.0);
        let mut prev = 0.0;
        for k in 1..=10 {
            let s = 50.0 * k as f64;
            let o = oracle_er(t, a, 0.0, s, x, DEFAULT_KAPPA, DEFAULT_Y_CONSTANT).unwrap();
            assert!(o.value > prev && o.lower <= o.value && o.value <= o.upper);
            prev = o.value;
        }
        assert!(oracle_er(t, a, 0.0, 999.0, x, 5.0, 10.0).is_err());
        assert!(oracle_er(t, a, 0.0, 100.0, 30.0, 5.0, 10.0).is_err());
    }

    #[test]
    fn second_moment_shapes() {
        let (t, a, s, x) = (1000.0, 1.5, 300.0, 8.0);
        let z2 = bound_ez2(t, a, 0.0, s, x).unwrap();
        let r2 = bound_er2(t, a, 0.0, s, x).unwrap();
        assert!(z2 > 0.0 && r2 > 0.0);
        assert!((r2 / z2 / (2.0 * a).exp() - 1.0).abs() < 1e-14);
    }
}
