//! Deterministic checks of the exact kernels and the branching-process
//! Laplace exponent.

use std::f64::consts::PI;

use anyhow::Result;
use bbm_core::csbp::{BranchingMechanism, Integrator};
use bbm_core::heatkernel::{strip_kernel, strip_kernel_fourier, strip_kernel_images, tau};
use bbm_core::quadrature::{gauss_legendre, integrate};
use bbm_core::CriticalCurve;
use serde::{Deserialize, Serialize};

use crate::report::{Report, Threshold};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MathConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub kernel_times: Vec<f64>,
    pub kernel_points: usize,
    pub kernel_tol: f64,
    pub projection_times: Vec<f64>,
    pub projection_tol: f64,
    pub chapman_kolmogorov: Vec<[f64; 4]>,
    pub chapman_kolmogorov_tol: f64,
    pub csbp_cases: Vec<[f64; 3]>,
    pub ode_steps: usize,
    pub ode_tol: f64,
    pub semigroup_tol: f64,
    pub fixed_point_tol: f64,
    pub tau_cases: Vec<[f64; 3]>,
    pub tau_tol: f64,
}

fn max_over<I: Iterator<Item = Result<f64>>>(it: I) -> Result<f64> {
    let mut worst = 0.0f64;
    for v in it {
        worst = worst.max(v?);
    }
    Ok(worst)
}

pub fn run(cfg: &MathConfig, seed: u64) -> Result<Report> {
    let mut report = Report::new("math", seed, cfg)?;
    let n = cfg.kernel_points;
    let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();

    let mut points = Vec::new();
    for &s in &cfg.kernel_times {
        for &x in &grid {
            for &y in &grid {
                points.push((s, x, y));
            }
        }
    }
    let kernel_gap = max_over(points.iter().map(|&(s, x, y)| {
        let a = strip_kernel_fourier(s, x, y, 1e-14)?;
        let b = strip_kernel_images(s, x, y, 1e-14)?;
        Ok((a - b).abs())
    }))?;
    report.gate(
        "fourier_vs_images_max_abs",
        kernel_gap,
        None,
        Threshold::Below { value: cfg.kernel_tol },
    );
    report.info("fourier_vs_images_points", points.len() as f64, None);

    let projection_gap = max_over(cfg.projection_times.iter().flat_map(|&s| {
        grid.iter().map(move |&x| {
            let mut err = None;
            let v = gauss_legendre(
                |y| match strip_kernel(s, x, y, 1e-14) {
                    Ok(w) => (PI * y).sin() * w,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                },
                0.0,
                1.0,
                96,
            );
            if let Some(e) = err {
                return Err(e.into());
            }
            Ok((v - (-PI * PI * s / 2.0).exp() * (PI * x).sin()).abs())
        })
    }))?;
    report.gate(
        "sine_projection_max_abs",
        projection_gap,
        None,
        Threshold::Below { value: cfg.projection_tol },
    );

    let ck_gap = max_over(cfg.chapman_kolmogorov.iter().map(|&[u, v, x, y]| {
        let lhs = integrate(
            |z| {
                strip_kernel(u, x, z, 1e-14).unwrap_or(f64::NAN)
                    * strip_kernel(v, z, y, 1e-14).unwrap_or(f64::NAN)
            },
            0.0,
            1.0,
            1e-12,
        )?;
        Ok((lhs - strip_kernel(u + v, x, y, 1e-14)?).abs())
    }))?;
    report.gate(
        "chapman_kolmogorov_max_abs",
        ck_gap,
        None,
        Threshold::Below { value: cfg.chapman_kolmogorov_tol },
    );

    let mut ode_gap = 0.0f64;
    let mut semigroup_gap = 0.0f64;
    let mut fixed_gap = 0.0f64;
    for &[a, t, lambda] in &cfg.csbp_cases {
        let m = BranchingMechanism::with_unit_scale(a)?;
        let exact = m.laplace_exponent(t, lambda)?;
        let rk = m.laplace_exponent_ode(t, lambda, cfg.ode_steps, Integrator::Rk4)?;
        ode_gap = ode_gap.max((rk - exact).abs());
        for &split in &[0.25, 0.5, 0.75] {
            let inner = m.laplace_exponent(t * (1.0 - split), lambda)?;
            let composed = m.laplace_exponent(t * split, inner)?;
            semigroup_gap = semigroup_gap.max((composed - exact).abs() / exact.max(1.0));
        }
        let alpha = (-1.5 * a).exp();
        fixed_gap = fixed_gap.max((m.laplace_exponent(t, alpha)? - alpha).abs());
    }
    report.gate("ode_vs_closed_form_max_abs", ode_gap, None, Threshold::Below { value: cfg.ode_tol });
    report.gate(
        "semigroup_max_rel",
        semigroup_gap,
        None,
        Threshold::Below { value: cfg.semigroup_tol },
    );
    report.gate(
        "fixed_point_max_abs",
        fixed_gap,
        None,
        Threshold::Below { value: cfg.fixed_point_tol },
    );

    let tau_gap = max_over(cfg.tau_cases.iter().map(|&[t, r, s]| {
        let curve = CriticalCurve::new(t, 0.0)?;
        let quad = integrate(|u| curve.level_raw(u).powi(-2), r, s, 1e-13)?;
        Ok((tau(t, 0.0, r, s)? - quad).abs())
    }))?;
    report.gate("tau_closed_form_vs_quadrature_max_abs", tau_gap, None, Threshold::Below { value: cfg.tau_tol });
    Ok(report)
}
