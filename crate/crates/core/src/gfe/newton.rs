//! Indirect state message: solve z̄ = σ(ρ(z̄) + ln d), then divide out d.
//!
//! The solve runs in logit space. With η the unnormalised log of z̄, the
//! stationarity condition is η − ρ(σ(η)) − ln d ∝ 1. One coordinate of η is
//! pinned to remove the shift gauge, leaving a square system in the others.

use nalgebra::{DMatrix, DVector};
use ndarray::Array1;

use super::{rho, ObservationStats};
use crate::dist::{safe_ln, softmax, Categorical, ProbVector};
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonConfig {
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Forward-difference step for the Jacobian.
    pub fd_step: f64,
    /// Logit-space tolerance at which Newton stops early.
    pub tolerance: f64,
    /// Required ‖z̄ − σ(ρ(z̄) + ln d)‖∞ of an accepted solution.
    pub residual_tolerance: f64,
    pub fallback_damping: f64,
    pub fallback_iterations: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            max_halvings: 20,
            fd_step: 1e-7,
            tolerance: 1e-12,
            residual_tolerance: 1e-8,
            fallback_damping: 0.5,
            fallback_iterations: 500,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    /// Cat(z | σ(ln z̄* − ln d))
    pub message: Categorical,
    pub z_bar: ProbVector,
    pub iterations: usize,
    /// ‖z̄* − σ(ρ(z̄*) + ln d)‖∞
    pub residual: f64,
    /// Set when Newton stalled and damped fixed-point iteration produced the result.
    pub fallback: bool,
}

/// Residual of the fixed-point equation in probability space.
pub fn fixed_point_residual(
    stats: &ObservationStats,
    log_d: &Array1<f64>,
    z_bar: &Array1<f64>,
) -> Result<f64> {
    let target = softmax(&(rho(stats, z_bar)? + log_d))?;
    Ok(z_bar
        .iter()
        .zip(target.as_array())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

struct Problem<'a> {
    stats: &'a ObservationStats,
    log_d: Array1<f64>,
    pinned: usize,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.log_d.len()
    }

    fn eta(&self, y: &DVector<f64>) -> Array1<f64> {
        let mut eta = Array1::zeros(self.n());
        let mut k = 0;
        for i in 0..self.n() {
            if i != self.pinned {
                eta[i] = y[k];
                k += 1;
            }
        }
        eta
    }

    fn z_bar(&self, y: &DVector<f64>) -> Result<Array1<f64>> {
        Ok(softmax(&self.eta(y))?.into_array())
    }

    /// (η − φ(η))ᵢ − (η − φ(η))ₚ over the free coordinates, φ = ρ(σ(η)) + ln d.
    fn residual(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let eta = self.eta(y);
        let z = softmax(&eta)?.into_array();
        let phi = rho(self.stats, &z)? + &self.log_d;
        let g = &eta - &phi;
        let gp = g[self.pinned];
        let mut r = DVector::zeros(self.n() - 1);
        let mut k = 0;
        for i in 0..self.n() {
            if i != self.pinned {
                r[k] = g[i] - gp;
                k += 1;
            }
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "Newton residual".into(),
            });
        }
        Ok(r)
    }

    fn jacobian(&self, y: &DVector<f64>, r0: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
        let m = y.len();
        let mut jac = DMatrix::zeros(m, m);
        for c in 0..m {
            let mut yp = y.clone();
            yp[c] += h;
            let rp = self.residual(&yp)?;
            jac.set_column(c, &((rp - r0) / h));
        }
        Ok(jac)
    }
}

fn sup(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Message ② by the indirect route. `d` is the incoming message on z; its
/// zeros are floored inside the exponent.
pub fn message_to_state_newton(
    d: &ProbVector,
    stats: &ObservationStats,
    config: &NewtonConfig,
) -> Result<NewtonOutcome> {
    let n = stats.states();
    if d.len() != n {
        return Err(shape_err("indirect message", n, d.len()));
    }
    let log_d = d.as_array().mapv(safe_ln);
    if n == 1 {
        let one = ProbVector::uniform(1);
        return Ok(NewtonOutcome {
            message: Categorical::new(one.clone()),
            z_bar: one,
            iterations: 0,
            residual: 0.0,
            fallback: false,
        });
    }

    let pinned = d.argmax();
    let problem = Problem {
        stats,
        log_d: log_d.clone(),
        pinned,
    };
    let mut y = DVector::from_iterator(
        n - 1,
        (0..n)
            .filter(|&i| i != pinned)
            .map(|i| log_d[i] - log_d[pinned]),
    );

    let mut iterations = 0;
    let mut r = problem.residual(&y)?;
    while iterations < config.max_iterations {
        if sup(&r) < config.tolerance {
            break;
        }
        iterations += 1;
        let jac = problem.jacobian(&y, &r, config.fd_step)?;
        let Some(step) = jac.lu().solve(&(-&r)) else {
            break;
        };
        let norm0 = r.norm();
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let cand = &y + &step * scale;
            if let Ok(rc) = problem.residual(&cand) {
                if rc.norm() < norm0 {
                    accepted = Some((cand, rc));
                    break;
                }
            }
            scale *= 0.5;
        }
        match accepted {
            Some((yc, rc)) => {
                y = yc;
                r = rc;
            }
            None => break,
        }
    }

    let mut z = problem.z_bar(&y)?;
    let mut residual = fixed_point_residual(stats, &log_d, &z)?;
    let mut fallback = false;
    if residual >= config.residual_tolerance {
        fallback = true;
        let w = config.fallback_damping;
        for _ in 0..config.fallback_iterations {
            let target = softmax(&(rho(stats, &z)? + &log_d))?.into_array();
            z = &z * (1.0 - w) + &target * w;
            iterations += 1;
            residual = fixed_point_residual(stats, &log_d, &z)?;
            if residual < config.residual_tolerance {
                break;
            }
        }
        if residual >= config.residual_tolerance {
            return Err(Error::NoConvergence {
                iterations,
                residual,
            });
        }
    }

    let z_bar = ProbVector::normalised(z)?;
    let log_msg = z_bar.as_array().mapv(safe_ln) - &log_d;
    Ok(NewtonOutcome {
        message: Categorical::new(softmax(&log_msg)?),
        z_bar,
        iterations,
        residual,
        fallback,
    })
}
