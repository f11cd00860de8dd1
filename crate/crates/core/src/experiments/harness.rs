//! Nested Monte Carlo estimate of the `L^q(ℙ₁)` distance between `u(T,x)` and
//! `e^{Y²/2T} v(T,x,Y)`, `Y = Y_T − y₀`.
//!
//! The outer loop draws observation paths under ℙ₁. For each one `u(T,·)` is
//! computed by the configured u-solver; `v` comes from a single Kolmogorov
//! solve per horizon, shared by all paths and probes.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{constant_c_breakdown, ConstantBreakdown, TheoremParams};
use crate::error::{Error, Result};
use crate::fk::path_functionals_coupled;
use crate::kolmogorov_pde::{
    evaluate_approximation, solve, Axis, Diagnostics, Grid2D, PDESolution, ZakaiSolver,
};
use crate::model::{estimate_constants, DerivedCoefficients, ModelConstants};
use crate::paths::{sample_observation_p1, ObservationPath, StreamFamily, StreamTag, TimeGrid};
use crate::stats::{lq_norm, pairwise_sum};

use super::config::{ExperimentConfig, USolver};

/// Solver health reported next to each error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    /// Kolmogorov solve: fallback steps, worst undershoot and boundary mass.
    pub pde: Diagnostics,
    /// Worst backward-Euler fallbacks over the u-solves of this horizon.
    pub u_fallbacks: usize,
    /// Largest `|u|` on the x-boundary relative to the maximum, over paths.
    pub u_boundary_relative: f64,
    /// Half-width of the y-grid actually used.
    pub y_span: f64,
    /// Whether the y-grid had to be widened to cover every `Y_T`.
    pub y_widened: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub model: String,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub x: f64,
    pub q: f64,
    pub lq_error: f64,
    pub mc_std_error: f64,
    pub n_obs_paths: usize,
    /// `𝒞 T`.
    pub bound: f64,
    /// `‖Δ − Δ_{dt·2}‖_q + ‖Δ − Δ_{dy·2}‖_q`: the change when the time step,
    /// and separately the y-cell of the Kolmogorov grid, is doubled.
    pub discretization: Option<f64>,
    pub solver: USolver,
    pub seed: u64,
    pub diagnostics: SolverDiagnostics,
}

/// Sup over the probe set for one horizon, and the bound check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSummary {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub records: Vec<ErrorRecord>,
    pub sup_error: f64,
    pub sup_x: f64,
    pub sup_std_error: f64,
    /// Largest discretisation estimate over the probes (0 without Richardson).
    pub discretization: f64,
    pub constant: ConstantBreakdown,
    pub bound: f64,
    /// `3·s.e. + 2·discretisation + ROUNDING_FLOOR·E|u|` at the maximising probe.
    pub budget: f64,
    pub satisfied: bool,
    pub elapsed_seconds: f64,
}

/// Model, coefficients and constants shared by every horizon of a study.
pub struct Setup {
    pub config: ExperimentConfig,
    pub coeffs: DerivedCoefficients,
    pub constants: ModelConstants,
    pub q1: f64,
    pub q2: f64,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let coeffs = config.coefficients()?;
        if coeffs.dim() != 1 {
            return Err(Error::Dimension {
                what: "experiment model",
                expected: 1,
                got: coeffs.dim(),
            });
        }
        let constants = estimate_constants(&coeffs, config.box_radius(), config.constants.n_samples)?
            .with_overrides(&config.constants.overrides);
        let (q1, q2) = config.holder_split()?;
        Ok(Setup {
            config: config.clone(),
            coeffs,
            constants,
            q1,
            q2,
        })
    }

    pub fn theorem_params(&self, horizon: f64) -> Result<TheoremParams> {
        TheoremParams::new(
            self.config.q,
            self.q1,
            self.q2,
            horizon,
            self.config.radius,
            self.constants,
        )
    }

    /// Stream group of a horizon: its position in the configured list.
    fn horizon_group(&self, horizon: f64) -> u32 {
        let h = &self.config.horizons;
        h.iter().position(|t| *t == horizon).unwrap_or(h.len()) as u32
    }

    pub fn observation_paths(&self, horizon: f64) -> Result<Vec<ObservationPath>> {
        let grid = TimeGrid::new(horizon, self.config.grid.zakai_steps)?;
        let family = StreamFamily::new(
            self.config.seed,
            StreamTag::Observation,
            self.horizon_group(horizon),
        );
        (0..self.config.n_obs_paths)
            .into_par_iter()
            .map(|p| sample_observation_p1(&grid, family.stream(p)))
            .collect()
    }

    fn pde_grid(&self, horizon: f64, y_sigmas: f64) -> Result<Grid2D> {
        let g = &self.config.grid;
        Grid2D::for_horizon(
            horizon,
            g.x_min,
            g.x_max,
            g.n_x,
            g.n_y,
            y_sigmas,
            self.constants.h_inf,
        )
    }
}

/// Kolmogorov solves of a horizon: the fine one, and for Richardson
/// estimates one with half the time steps and one with half the y-cells.
pub(crate) struct PdeSet {
    pub(crate) fine: PDESolution,
    coarse_t: Option<PDESolution>,
    coarse_y: Option<PDESolution>,
    span: f64,
    widened: bool,
}

fn halve_y(grid: &Grid2D) -> Result<Grid2D> {
    let y = Axis::new(grid.y.min(), grid.y.max(), (grid.y.n() - 1) / 2 + 1)?;
    Ok(Grid2D::new(grid.x, y))
}

/// Largest `|y|` that bicubic evaluation accepts on this grid.
fn evaluable_span(grid: &Grid2D) -> f64 {
    grid.y.max() - 1.5 * grid.y.step()
}

pub(crate) fn solve_pde(
    setup: &Setup,
    horizon: f64,
    max_abs_y: f64,
    with_coarse: bool,
) -> Result<PdeSet> {
    let cfg = &setup.config;
    let mut grid = setup.pde_grid(horizon, cfg.grid.y_sigmas)?;
    // The y-halved grid has the narrowest evaluable band.
    let band = |g: &Grid2D| -> Result<f64> {
        if with_coarse {
            Ok(evaluable_span(&halve_y(g)?))
        } else {
            Ok(evaluable_span(g))
        }
    };
    let mut widened = false;
    if max_abs_y > band(&grid)? {
        // Widen once so that the largest observation sits well inside.
        let want = 1.25 * max_abs_y;
        let sigmas = (want - setup.constants.h_inf * horizon) / horizon.sqrt();
        grid = setup.pde_grid(horizon, sigmas.max(cfg.grid.y_sigmas))?;
        widened = true;
        if max_abs_y > band(&grid)? {
            return Err(Error::OutOfDomain {
                x: f64::NAN,
                y: max_abs_y,
            });
        }
    }
    let steps = cfg.grid.pde_steps;
    let fine = solve(&grid, horizon, steps, &setup.coeffs)?;
    let (coarse_t, coarse_y) = if with_coarse {
        (
            Some(solve(&grid, horizon, steps / 2, &setup.coeffs)?),
            Some(solve(&halve_y(&grid)?, horizon, steps, &setup.coeffs)?),
        )
    } else {
        (None, None)
    };
    Ok(PdeSet {
        fine,
        coarse_t,
        coarse_y,
        span: grid.y.max(),
        widened,
    })
}

/// Differences `u − e^{Y²/2T}v` at every probe for one observation path.
struct PathDifferences {
    fine: Vec<f64>,
    /// Both solvers with half the time steps.
    coarse_t: Option<Vec<f64>>,
    /// Fine `u` against the y-halved Kolmogorov solve.
    coarse_y: Option<Vec<f64>>,
    u_abs: Vec<f64>,
    fallbacks: usize,
    boundary_relative: f64,
}

fn approximations(pde: &PDESolution, probes: &[f64], y: f64) -> Result<Vec<f64>> {
    probes
        .iter()
        .map(|&x| evaluate_approximation(pde, x, y))
        .collect()
}

fn minus(u: &[f64], v: &[f64]) -> Vec<f64> {
    u.iter().zip(v).map(|(a, b)| a - b).collect()
}

fn zakai_differences(
    setup: &Setup,
    pde: &PdeSet,
    probes: &[f64],
    obs: &[ObservationPath],
    horizon: f64,
) -> Result<Vec<PathDifferences>> {
    let g = &setup.config.grid;
    let axis = Axis::new(g.x_min, g.x_max, g.n_x)?;
    let fine_grid = TimeGrid::new(horizon, g.zakai_steps)?;
    let fine_solver = ZakaiSolver::new(axis, fine_grid, &setup.coeffs)?;
    let coarse_solver = if pde.coarse_t.is_some() {
        Some(ZakaiSolver::new(axis, fine_grid.coarsen()?, &setup.coeffs)?)
    } else {
        None
    };
    obs.par_iter()
        .map(|path| {
            let y = path.terminal();
            let sol = fine_solver.solve(path)?;
            let u = probes
                .iter()
                .map(|&x| sol.value_at(x))
                .collect::<Result<Vec<f64>>>()?;
            let fine = minus(&u, &approximations(&pde.fine, probes, y)?);
            let mut fallbacks = sol.diagnostics.fallbacks;
            let mut boundary_relative = sol.diagnostics.boundary_relative;
            let coarse_t = match (&coarse_solver, &pde.coarse_t) {
                (Some(cs), Some(pc)) => {
                    let sc = cs.solve(&path.coarsen()?)?;
                    fallbacks += sc.diagnostics.fallbacks;
                    boundary_relative = boundary_relative.max(sc.diagnostics.boundary_relative);
                    let uc = probes
                        .iter()
                        .map(|&x| sc.value_at(x))
                        .collect::<Result<Vec<f64>>>()?;
                    Some(minus(&uc, &approximations(pc, probes, y)?))
                }
                _ => None,
            };
            let coarse_y = match &pde.coarse_y {
                Some(py) => Some(minus(&u, &approximations(py, probes, y)?)),
                None => None,
            };
            Ok(PathDifferences {
                fine,
                coarse_t,
                coarse_y,
                u_abs: u.iter().map(|v| v.abs()).collect(),
                fallbacks,
                boundary_relative,
            })
        })
        .collect()
}

fn fk_differences(
    setup: &Setup,
    pde: &PdeSet,
    probes: &[f64],
    obs: &[ObservationPath],
    horizon: f64,
) -> Result<Vec<PathDifferences>> {
    let cfg = &setup.config;
    let group_base = setup.horizon_group(horizon) as usize * cfg.n_obs_paths;
    if group_base + cfg.n_obs_paths > 1 << 24 {
        return Err(Error::Config(
            "too many observation paths for the fk-mc stream layout".into(),
        ));
    }
    // Paths run in order; the inner sampler parallelises over auxiliary paths.
    obs.iter()
        .enumerate()
        .map(|(p, path)| {
            let y = path.terminal();
            let family = StreamFamily::new(cfg.seed, StreamTag::Auxiliary, (group_base + p) as u32);
            let mut u = Vec::with_capacity(probes.len());
            let mut uc = Vec::with_capacity(probes.len());
            for &x in probes {
                let pf = path_functionals_coupled(&[x], &setup.coeffs, path, cfg.fk_inner_paths, family)?;
                let f: Vec<f64> = pf.iter().map(|p| p.0.u_sample()).collect::<Result<_>>()?;
                let c: Vec<f64> = pf.iter().map(|p| p.1.u_sample()).collect::<Result<_>>()?;
                u.push(pairwise_sum(&f) / f.len() as f64);
                uc.push(pairwise_sum(&c) / c.len() as f64);
            }
            let fine = minus(&u, &approximations(&pde.fine, probes, y)?);
            let coarse_t = match &pde.coarse_t {
                Some(pc) => Some(minus(&uc, &approximations(pc, probes, y)?)),
                None => None,
            };
            let coarse_y = match &pde.coarse_y {
                Some(py) => Some(minus(&u, &approximations(py, probes, y)?)),
                None => None,
            };
            Ok(PathDifferences {
                fine,
                coarse_t,
                coarse_y,
                u_abs: u.iter().map(|v| v.abs()).collect(),
                fallbacks: 0,
                boundary_relative: 0.0,
            })
        })
        .collect()
}

/// Relative size of the floating-point floor added to every budget.
pub const ROUNDING_FLOOR: f64 = 1e-10;

/// Runs one horizon over the given probes.
pub fn run_horizon(setup: &Setup, horizon: f64, probes: &[f64]) -> Result<HorizonSummary> {
    let start = Instant::now();
    let cfg = &setup.config;
    if probes.is_empty() {
        return Err(Error::Config("probe set is empty".into()));
    }
    let params = setup.theorem_params(horizon)?;
    let constant = constant_c_breakdown(&params)?;
    let bound = constant.value * horizon;

    let obs = setup.observation_paths(horizon)?;
    let max_abs_y = obs.iter().map(|o| o.terminal().abs()).fold(0.0, f64::max);
    let pde = solve_pde(setup, horizon, max_abs_y, cfg.richardson)?;

    let diffs = match cfg.u_solver {
        USolver::ZakaiSplitting => zakai_differences(setup, &pde, probes, &obs, horizon)?,
        USolver::FkMc => fk_differences(setup, &pde, probes, &obs, horizon)?,
    };
    let diagnostics = SolverDiagnostics {
        pde: pde.fine.diagnostics,
        u_fallbacks: diffs.iter().map(|d| d.fallbacks).sum(),
        u_boundary_relative: diffs.iter().map(|d| d.boundary_relative).fold(0.0, f64::max),
        y_span: pde.span,
        y_widened: pde.widened,
    };

    let mut records = Vec::with_capacity(probes.len());
    let mut column = vec![0.0; diffs.len()];
    let mut budgets = Vec::with_capacity(probes.len());
    for (k, &x) in probes.iter().enumerate() {
        for (c, d) in column.iter_mut().zip(&diffs) {
            *c = d.fine[k];
        }
        let est = lq_norm(&column, cfg.q);
        if !est.norm.is_finite() {
            return Err(Error::NonFinite {
                what: "L^q error estimate",
                x: vec![x],
            });
        }
        let mut richardson = |pick: fn(&PathDifferences) -> Option<&Vec<f64>>| {
            for (c, d) in column.iter_mut().zip(&diffs) {
                *c = d.fine[k] - pick(d).map_or(d.fine[k], |v| v[k]);
            }
            lq_norm(&column, cfg.q).norm
        };
        let discretization = if cfg.richardson {
            Some(richardson(|d| d.coarse_t.as_ref()) + richardson(|d| d.coarse_y.as_ref()))
        } else {
            None
        };
        let scale = pairwise_sum(&diffs.iter().map(|d| d.u_abs[k]).collect::<Vec<_>>()) / diffs.len() as f64;
        budgets.push(3.0 * est.std_error + 2.0 * discretization.unwrap_or(0.0) + ROUNDING_FLOOR * scale);
        records.push(ErrorRecord {
            model: cfg.model.clone(),
            horizon,
            x,
            q: cfg.q,
            lq_error: est.norm,
            mc_std_error: est.std_error,
            n_obs_paths: diffs.len(),
            bound,
            discretization,
            solver: cfg.u_solver,
            seed: cfg.seed,
            diagnostics,
        });
    }
    Ok(summarize(horizon, records, &budgets, constant, start.elapsed().as_secs_f64()))
}

fn summarize(
    horizon: f64,
    records: Vec<ErrorRecord>,
    budgets: &[f64],
    constant: ConstantBreakdown,
    elapsed_seconds: f64,
) -> HorizonSummary {
    let mut best = 0;
    for (k, r) in records.iter().enumerate() {
        if r.lq_error > records[best].lq_error {
            best = k;
        }
    }
    let top = &records[best];
    let discretization = records
        .iter()
        .map(|r| r.discretization.unwrap_or(0.0))
        .fold(0.0, f64::max);
    let bound = constant.value * horizon;
    // Every probe must satisfy its own bound; the sup is reported.
    let satisfied = records
        .iter()
        .zip(budgets)
        .all(|(r, b)| r.lq_error <= bound + b);
    HorizonSummary {
        horizon,
        sup_error: top.lq_error,
        sup_x: top.x,
        sup_std_error: top.mc_std_error,
        discretization,
        constant,
        bound,
        budget: budgets[best],
        satisfied,
        records,
        elapsed_seconds,
    }
}

/// The `L^q` error at a single point.
pub fn lq_error_at(x: f64, horizon: f64, config: &ExperimentConfig) -> Result<ErrorRecord> {
    let setup = Setup::new(config)?;
    if x.abs() > config.radius {
        return Err(Error::Config(format!("x = {x} lies outside the ball of radius K")));
    }
    Ok(run_horizon(&setup, horizon, &[x])?.records.remove(0))
}

/// Sup of the `L^q` error over the configured probe set.
pub fn sup_error_ball(horizon: f64, config: &ExperimentConfig) -> Result<HorizonSummary> {
    let setup = Setup::new(config)?;
    run_horizon(&setup, horizon, &config.probes())
}
