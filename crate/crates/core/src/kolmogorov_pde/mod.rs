//! Grid solvers in one space dimension: the degenerate Kolmogorov problem
//!
//! ```text
//! ∂_t v = ℒ*v − h(x) ∂_y v,    v(0, x, y) = u₀(x) e^{−y²/2T},
//! ```
//!
//! on a tensor `(x, y)` grid, and a splitting solver for the Zakai equation
//! along a fixed observation path.
//!
//! The Kolmogorov solver uses Strang splitting: half a step of exact
//! transport in `y`, a Crank–Nicolson step of `ℒ*` in `x`, another half step
//! in `y`. Transport is semi-Lagrangian. It interpolates the Gaussian-tilted
//! field `v e^{y²/2T}` rather than `v` itself: the tilted field is smooth and
//! slowly varying, whereas `v` carries the narrow Gaussian envelope.

mod interp;
mod snapshot;
mod tridiag;
mod zakai;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DerivedCoefficients;

pub use snapshot::{
    decode_snapshot, encode_snapshot, read_snapshot, write_csv, write_snapshot, SNAPSHOT_MAGIC,
    SNAPSHOT_VERSION,
};
pub use zakai::{zakai_splitting_solve, ZakaiMoments, ZakaiSolution, ZakaiSolver};

pub(crate) use interp::stencil;
use interp::{hermite_shift, hermite_slopes};
use tridiag::{Operator, ThetaStepper};

/// Crank–Nicolson.
const THETA: f64 = 0.5;
/// Relative undershoot that triggers the backward-Euler fallback.
const UNDERSHOOT_TOL: f64 = 1e-10;

/// Uniform axis with `n` nodes including both end points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    min: f64,
    max: f64,
    n: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(min < max) || !min.is_finite() || !max.is_finite() {
            return Err(Error::Config(format!("axis needs min < max, got [{min}, {max}]")));
        }
        if n < 8 {
            return Err(Error::Config(format!("axis needs at least 8 nodes, got {n}")));
        }
        Ok(Axis { min, max, n })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.max
        } else {
            self.min + i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Fractional index of `x`.
    #[inline]
    pub fn position(&self, x: f64) -> f64 {
        (x - self.min) / self.step()
    }

    /// Cubic interpolation stencil at `x`, or `None` if `x` is less than one
    /// cell from either end.
    pub fn stencil(&self, x: f64) -> Option<(usize, [f64; 4])> {
        let d = self.step();
        if !(x >= self.min + d && x <= self.max - d) {
            return None;
        }
        Some(stencil(self.position(x), self.n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub x: Axis,
    pub y: Axis,
}

impl Grid2D {
    pub fn new(x: Axis, y: Axis) -> Self {
        Grid2D { x, y }
    }

    /// `x ∈ [x_min, x_max]` and a symmetric `y` range of half-width
    /// `y_sigmas·√T + h_inf·T`: the Gaussian envelope, shifted by at most
    /// `|h|∞ T`, has decayed by `e^{−y_sigmas²/2}` at the edge.
    pub fn for_horizon(
        horizon: f64,
        x_min: f64,
        x_max: f64,
        n_x: usize,
        n_y: usize,
        y_sigmas: f64,
        h_inf: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        let span = y_sigmas * horizon.sqrt() + h_inf * horizon;
        Ok(Grid2D {
            x: Axis::new(x_min, x_max, n_x)?,
            y: Axis::new(-span, span, n_y)?,
        })
    }

    pub fn len(&self) -> usize {
        self.x.n() * self.y.n()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Monitoring data collected while solving.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: usize,
    /// Steps whose Crank–Nicolson undershoot forced a backward-Euler redo.
    pub fallbacks: usize,
    /// Most negative value seen, relative to the maximum at that time.
    pub min_relative: f64,
    /// Largest value on the outer boundary relative to the interior maximum.
    pub boundary_relative: f64,
}

/// Nodal values of `v(t, ·, ·)`, stored x-major: `values[i * n_y + j]` is
/// `v(t, x_i, y_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PDESolution {
    grid: Grid2D,
    values: Vec<f64>,
    t: f64,
    horizon: f64,
    pub diagnostics: Diagnostics,
}

impl PDESolution {
    pub fn from_values(grid: Grid2D, values: Vec<f64>, t: f64, horizon: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Length {
                what: "solution values",
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(PDESolution {
            grid,
            values,
            t,
            horizon,
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// The `T` of the initial condition.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.y.n() + j]
    }

    /// Trapezoidal `∫∫ v dx dy`.
    pub fn mass(&self) -> f64 {
        let (nx, ny) = (self.grid.x.n(), self.grid.y.n());
        let mut total = 0.0;
        for i in 0..nx {
            let wi = if i == 0 || i == nx - 1 { 0.5 } else { 1.0 };
            let row = &self.values[i * ny..(i + 1) * ny];
            let mut s = 0.5 * (row[0] + row[ny - 1]);
            for v in &row[1..ny - 1] {
                s += v;
            }
            total += wi * s;
        }
        total * self.grid.x.step() * self.grid.y.step()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |a, v| a.min(*v))
    }

    fn boundary_max(&self) -> f64 {
        let (nx, ny) = (self.grid.x.n(), self.grid.y.n());
        let mut m: f64 = 0.0;
        for i in 0..nx {
            m = m.max(self.value(i, 0).abs()).max(self.value(i, ny - 1).abs());
        }
        for j in 0..ny {
            m = m.max(self.value(0, j).abs()).max(self.value(nx - 1, j).abs());
        }
        m
    }
}

/// `v(0, x_i, y_j) = u₀(x_i) e^{−y_j²/2T}`.
pub fn initial_condition(
    grid: &Grid2D,
    horizon: f64,
    coeffs: &DerivedCoefficients,
) -> Result<PDESolution> {
    check_one_dimensional(coeffs)?;
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    let ys = grid.y.nodes();
    let envelope: Vec<f64> = ys.iter().map(|y| (-y * y / (2.0 * horizon)).exp()).collect();
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.x.n() {
        let x = grid.x.node(i);
        let u0 = coeffs.u0(&[x]);
        if !u0.is_finite() {
            return Err(Error::NonFinite {
                what: "initial density",
                x: vec![x],
            });
        }
        values.extend(envelope.iter().map(|e| u0 * e));
    }
    let mut sol = PDESolution::from_values(*grid, values, 0.0, horizon)?;
    sol.diagnostics.boundary_relative = relative(sol.boundary_max(), sol.max_abs());
    Ok(sol)
}

fn relative(a: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        a / scale
    } else {
        0.0
    }
}

fn check_one_dimensional(coeffs: &DerivedCoefficients) -> Result<()> {
    if coeffs.dim() != 1 {
        return Err(Error::Dimension {
            what: "grid solver state",
            expected: 1,
            got: coeffs.dim(),
        });
    }
    Ok(())
}

/// Reusable stepping machinery for one `(grid, T, dt, model)` combination.
pub struct KolmogorovSolver {
    grid: Grid2D,
    horizon: f64,
    dt: f64,
    cn: ThetaStepper,
    operator: Operator,
    fallback: Option<ThetaStepper>,
    /// Per x-row: transport shift over half a step, in y-index units.
    shifts: Vec<f64>,
    /// `e^{y_j²/2T}`.
    tilt: Vec<f64>,
    /// Per node: `e^{−(y_j − s_i)²/2T}`, the envelope at the departure point.
    untilt: Vec<f64>,
}

impl KolmogorovSolver {
    pub fn new(grid: Grid2D, horizon: f64, dt: f64, coeffs: &DerivedCoefficients) -> Result<Self> {
        check_one_dimensional(coeffs)?;
        if !(dt > 0.0) || !(horizon > 0.0) {
            return Err(Error::Domain(format!(
                "need dt > 0 and T > 0 (dt = {dt}, T = {horizon})"
            )));
        }
        let operator = Operator::new(&grid.x, coeffs)?;
        let cn = ThetaStepper::new(&operator, THETA, dt)?;
        let dy = grid.y.step();
        let half = 0.5 * dt;
        let mut shifts = Vec::with_capacity(grid.x.n());
        for i in 0..grid.x.n() {
            let h = coeffs.h(&[grid.x.node(i)]);
            if !h.is_finite() {
                return Err(Error::NonFinite {
                    what: "sensor",
                    x: vec![grid.x.node(i)],
                });
            }
            shifts.push(h * half);
        }
        let ys = grid.y.nodes();
        let tilt: Vec<f64> = ys.iter().map(|y| (y * y / (2.0 * horizon)).exp()).collect();
        let mut untilt = Vec::with_capacity(grid.len());
        for s in &shifts {
            untilt.extend(ys.iter().map(|y| {
                let d = y - s;
                (-d * d / (2.0 * horizon)).exp()
            }));
        }
        let shifts = shifts.into_iter().map(|s| s / dy).collect();
        Ok(KolmogorovSolver {
            grid,
            horizon,
            dt,
            cn,
            operator,
            fallback: None,
            shifts,
            tilt,
            untilt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Exact transport over half a step, row by row.
    fn advect_half(&self, values: &mut [f64]) {
        let ny = self.grid.y.n();
        values
            .par_chunks_mut(ny)
            .enumerate()
            .for_each_init(
                || (vec![0.0; ny], vec![0.0; ny]),
                |(tilted, slopes), (i, row)| {
                    let shift = self.shifts[i];
                    if shift == 0.0 {
                        return;
                    }
                    for j in 0..ny {
                        tilted[j] = row[j] * self.tilt[j];
                    }
                    hermite_slopes(tilted, slopes);
                    hermite_shift(tilted, slopes, shift, row);
                    let env = &self.untilt[i * ny..(i + 1) * ny];
                    for j in 0..ny {
                        row[j] *= env[j];
                    }
                },
            );
    }

    fn diffuse(&mut self, values: &mut [f64], work: &mut Vec<f64>, diag: &mut Diagnostics) -> Result<()> {
        let ny = self.grid.y.n();
        let before = values.to_vec();
        self.cn.apply(values, ny, work);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for v in values.iter() {
            lo = lo.min(*v);
            hi = hi.max(v.abs());
        }
        if lo < -UNDERSHOOT_TOL * hi {
            if self.fallback.is_none() {
                self.fallback = Some(ThetaStepper::new(&self.operator, 1.0, self.dt)?);
            }
            values.copy_from_slice(&before);
            self.fallback.as_ref().unwrap().apply(values, ny, work);
            diag.fallbacks += 1;
            lo = values.iter().fold(f64::INFINITY, |a, v| a.min(*v));
        }
        diag.min_relative = diag.min_relative.min(relative(lo, hi));
        Ok(())
    }

    /// One Strang step of size `dt`.
    pub fn step(&mut self, sol: &mut PDESolution) -> Result<()> {
        if sol.grid != self.grid || sol.horizon != self.horizon {
            return Err(Error::Config("solution does not match the solver's grid or T".into()));
        }
        let mut work = Vec::new();
        let mut values = std::mem::take(&mut sol.values);
        self.advect_half(&mut values);
        let r = self.diffuse(&mut values, &mut work, &mut sol.diagnostics);
        self.advect_half(&mut values);
        sol.values = values;
        r?;
        if sol.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                step: sol.diagnostics.steps + 1,
            });
        }
        sol.t += self.dt;
        sol.diagnostics.steps += 1;
        sol.diagnostics.boundary_relative = sol
            .diagnostics
            .boundary_relative
            .max(relative(sol.boundary_max(), sol.max_abs()));
        Ok(())
    }
}

/// A single Strang step of size `dt`; `dt = 0` returns the input unchanged.
pub fn step(sol: &PDESolution, dt: f64, coeffs: &DerivedCoefficients) -> Result<PDESolution> {
    if dt == 0.0 {
        return Ok(sol.clone());
    }
    let mut solver = KolmogorovSolver::new(sol.grid, sol.horizon, dt, coeffs)?;
    let mut out = sol.clone();
    solver.step(&mut out)?;
    Ok(out)
}

/// `v(T, ·, ·)` after `n_t` steps of size `T/n_t`.
pub fn solve(
    grid: &Grid2D,
    horizon: f64,
    n_t: usize,
    coeffs: &DerivedCoefficients,
) -> Result<PDESolution> {
    if n_t < 4 {
        return Err(Error::Config(format!("need at least 4 time steps, got {n_t}")));
    }
    let mut sol = initial_condition(grid, horizon, coeffs)?;
    let mut solver = KolmogorovSolver::new(*grid, horizon, horizon / n_t as f64, coeffs)?;
    for _ in 0..n_t {
        solver.step(&mut sol)?;
    }
    // Pin the final time exactly.
    sol.t = horizon;
    Ok(sol)
}

/// `e^{y²/2T} v(t, x, y)` by bicubic interpolation of the tilted field
/// `v e^{y²/2T}`. Points less than one cell from the grid edge are rejected.
pub fn evaluate_approximation(sol: &PDESolution, x: f64, y_obs: f64) -> Result<f64> {
    let (Some((bx, wx)), Some((by, wy))) = (sol.grid.x.stencil(x), sol.grid.y.stencil(y_obs))
    else {
        return Err(Error::OutOfDomain { x, y: y_obs });
    };
    let t2 = 2.0 * sol.horizon;
    let mut acc = 0.0;
    for (a, wa) in wx.iter().enumerate() {
        let mut row = 0.0;
        for (b, wb) in wy.iter().enumerate() {
            let j = by + b;
            let y = sol.grid.y.node(j);
            row += wb * sol.value(bx + a, j) * (y * y / t2).exp();
        }
        acc += wa * row;
    }
    Ok(acc)
}
