//! Continuous-state branching process with mechanism
//! `Psi(q) = a q + b q log q`.
//!
//! The Laplace exponent `u_t(lambda)` solves `du/dt = -Psi(u)`, `u_0 = lambda`,
//! and has the closed form `u_t(lambda) = lambda^{e^{-bt}} e^{a (e^{-bt} - 1) / b}`.
//! Then `E_x[exp(-lambda Xi_t)] = exp(-x u_t(lambda))`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Mechanism parameters `(a, b)` with `b > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchingMechanism {
    a: f64,
    b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Rk4,
}

impl BranchingMechanism {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(domain(format!("a = {a} must be finite")));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(domain(format!("b = {b} must be positive")));
        }
        Ok(Self { a, b })
    }

    /// The mechanism arising from the particle system, `b = 2/3`.
    pub fn with_unit_scale(a: f64) -> Result<Self> {
        Self::new(a, 2.0 / 3.0)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Unique positive zero `e^{-a/b}` of `Psi`, the fixed point of `u_t`.
    pub fn fixed_point(&self) -> f64 {
        (-self.a / self.b).exp()
    }

    pub fn psi(&self, q: f64) -> Result<f64> {
        if !(q >= 0.0) {
            return Err(domain(format!("Psi needs q >= 0, got {q}")));
        }
        if q == 0.0 {
            return Ok(0.0);
        }
        Ok(self.a * q + self.b * q * q.ln())
    }

    /// `log u_t(lambda)`, exact for any `lambda > 0`.
    pub fn log_laplace_exponent(&self, t: f64, lambda: f64) -> Result<f64> {
        check_time_and_lambda(t, lambda)?;
        let decay = (-self.b * t).exp();
        Ok(decay * lambda.ln() + self.a * (-self.b * t).exp_m1() / self.b)
    }

    pub fn laplace_exponent(&self, t: f64, lambda: f64) -> Result<f64> {
        if t == 0.0 {
            check_time_and_lambda(t, lambda)?;
            return Ok(lambda);
        }
        Ok(self.log_laplace_exponent(t, lambda)?.exp())
    }

    /// `u_t(lambda)` by integrating `du/dt = -Psi(u)` with `steps` equal steps.
    pub fn laplace_exponent_ode(
        &self,
        t: f64,
        lambda: f64,
        steps: usize,
        integrator: Integrator,
    ) -> Result<f64> {
        check_time_and_lambda(t, lambda)?;
        if steps == 0 {
            return Err(domain("steps must be at least 1"));
        }
        let h = t / steps as f64;
        let f = |u: f64| -(self.a * u + self.b * u * u.max(f64::MIN_POSITIVE).ln());
        let mut u = lambda;
        for _ in 0..steps {
            u = match integrator {
                Integrator::Euler => u + h * f(u),
                Integrator::Rk4 => {
                    let k1 = f(u);
                    let k2 = f(u + 0.5 * h * k1);
                    let k3 = f(u + 0.5 * h * k2);
                    let k4 = f(u + h * k3);
                    u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                }
            };
        }
        Ok(u)
    }

    /// `P_x(Xi_t -> 0) = exp(-alpha x)` with `alpha = e^{-3a/2}`; only
    /// defined for the `b = 2/3` normalisation.
    pub fn extinction_probability(&self, x: f64) -> Result<f64> {
        if (self.b - 2.0 / 3.0).abs() > 1e-12 {
            return Err(domain(format!(
                "extinction formula needs b = 2/3, got b = {}",
                self.b
            )));
        }
        if !(x >= 0.0) {
            return Err(domain(format!("initial mass {x} must be >= 0")));
        }
        Ok((-(-1.5 * self.a).exp() * x).exp())
    }

    /// `E_x[exp(-lambda Xi_t)] = exp(-x u_t(lambda))`.
    pub fn marginal_laplace(&self, x0: f64, t: f64, lambda: f64) -> Result<f64> {
        if !(x0 >= 0.0) {
            return Err(domain(format!("initial mass {x0} must be >= 0")));
        }
        if x0 == 0.0 {
            return Ok(1.0);
        }
        Ok((-x0 * self.laplace_exponent(t, lambda)?).exp())
    }
}

fn check_time_and_lambda(t: f64, lambda: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(domain(format!("time {t} must be finite and >= 0")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(domain(format!("lambda {lambda} must be positive")));
    }
    Ok(())
}
