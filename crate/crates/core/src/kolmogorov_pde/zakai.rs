//! Splitting solver for the Zakai equation `du = ℒ*u dt + h u dY` along a
//! fixed observation path.
//!
//! Each step multiplies by half of the exact solution of `du = h u dY`,
//! `exp(h ΔY − ½h² dt)`, takes a Crank–Nicolson step of `ℒ*`, and multiplies
//! by the other half. Consecutive half factors are merged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DerivedCoefficients;
use crate::paths::{ObservationPath, TimeGrid};

use super::tridiag::{Operator, ThetaStepper};
use super::{check_one_dimensional, relative, Axis, Diagnostics, THETA, UNDERSHOOT_TOL};

/// `u(t, ·)` on an x-axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ZakaiSolution {
    axis: Axis,
    values: Vec<f64>,
    t: f64,
    observation: ObservationPath,
    pub diagnostics: Diagnostics,
}

/// Mass, mean and variance of a density on the grid (trapezoidal rule).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZakaiMoments {
    pub mass: f64,
    pub mean: f64,
    pub variance: f64,
}

impl ZakaiSolution {
    pub fn axis(&self) -> &Axis {
        &self.axis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn observation(&self) -> &ObservationPath {
        &self.observation
    }

    /// Cubic interpolation at `x`; the point must be at least one cell inside.
    pub fn value_at(&self, x: f64) -> Result<f64> {
        let (b, w) = self.axis.stencil(x).ok_or(Error::OutOfDomain { x, y: f64::NAN })?;
        Ok((0..4).map(|k| w[k] * self.values[b + k]).sum())
    }

    pub fn moments(&self) -> ZakaiMoments {
        let n = self.axis.n();
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let x = self.axis.node(i);
            let u = w * self.values[i];
            m0 += u;
            m1 += u * x;
            m2 += u * x * x;
        }
        let dx = self.axis.step();
        let mass = m0 * dx;
        let mean = m1 / m0;
        ZakaiMoments {
            mass,
            mean,
            variance: m2 / m0 - mean * mean,
        }
    }
}

/// Precomputed operator factorisations for one `(axis, time grid, model)`.
pub struct ZakaiSolver {
    axis: Axis,
    grid: TimeGrid,
    cn: ThetaStepper,
    fallback: ThetaStepper,
    h: Vec<f64>,
    u0: Vec<f64>,
}

impl ZakaiSolver {
    pub fn new(axis: Axis, grid: TimeGrid, coeffs: &DerivedCoefficients) -> Result<Self> {
        check_one_dimensional(coeffs)?;
        let op = Operator::new(&axis, coeffs)?;
        let dt = grid.dt();
        let cn = ThetaStepper::new(&op, THETA, dt)?;
        let fallback = ThetaStepper::new(&op, 1.0, dt)?;
        let mut h = Vec::with_capacity(axis.n());
        let mut u0 = Vec::with_capacity(axis.n());
        for i in 0..axis.n() {
            let x = [axis.node(i)];
            let (hi, ui) = (coeffs.h(&x), coeffs.u0(&x));
            if !(hi.is_finite() && ui.is_finite()) {
                return Err(Error::NonFinite {
                    what: "sensor or initial density",
                    x: x.to_vec(),
                });
            }
            h.push(hi);
            u0.push(ui);
        }
        Ok(ZakaiSolver {
            axis,
            grid,
            cn,
            fallback,
            h,
            u0,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn solve(&self, obs: &ObservationPath) -> Result<ZakaiSolution> {
        if obs.grid() != self.grid {
            return Err(Error::Config(
                "observation path is not on the solver's time grid".into(),
            ));
        }
        let n = self.axis.n();
        let dt = self.grid.dt();
        let mut u = self.u0.clone();
        u[0] = 0.0;
        u[n - 1] = 0.0;
        let mut pending = vec![0.0; n];
        let mut before = vec![0.0; n];
        let mut work = Vec::new();
        let mut diag = Diagnostics::default();
        for (k, dy) in obs.increments().iter().enumerate() {
            for i in 0..n {
                let h = self.h[i];
                let half = 0.5 * (h * dy - 0.5 * h * h * dt);
                u[i] *= (pending[i] + half).exp();
                pending[i] = half;
            }
            before.copy_from_slice(&u);
            self.cn.apply(&mut u, 1, &mut work);
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for v in &u {
                lo = lo.min(*v);
                hi = hi.max(v.abs());
            }
            if lo < -UNDERSHOOT_TOL * hi {
                u.copy_from_slice(&before);
                self.fallback.apply(&mut u, 1, &mut work);
                diag.fallbacks += 1;
                lo = u.iter().fold(f64::INFINITY, |a, v| a.min(*v));
            }
            diag.min_relative = diag.min_relative.min(relative(lo, hi));
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { step: k + 1 });
            }
            diag.steps += 1;
        }
        for i in 0..n {
            u[i] *= pending[i].exp();
        }
        let hi = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        diag.boundary_relative = relative(u[1].abs().max(u[n - 2].abs()), hi);
        Ok(ZakaiSolution {
            axis: self.axis,
            values: u,
            t: self.grid.horizon(),
            observation: obs.clone(),
            diagnostics: diag,
        })
    }
}

/// `u(T, ·)` for the given observation path, on its time grid.
pub fn zakai_splitting_solve(
    axis: &Axis,
    obs: &ObservationPath,
    coeffs: &DerivedCoefficients,
) -> Result<ZakaiSolution> {
    ZakaiSolver::new(*axis, obs.grid(), coeffs)?.solve(obs)
}
