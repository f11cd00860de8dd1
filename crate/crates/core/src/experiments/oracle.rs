//! Cross-checks between the Monte Carlo and grid solvers:
//! `e^{y²/2T} fk_v` against the Kolmogorov solve, and `fk_u` against the
//! splitting solver along random observation paths.
//!
//! Each comparison passes when the gap is within `3·s.e.` plus a numerical
//! budget: the change of each side when its time step is doubled, and for the
//! grid solvers also when the spatial mesh is coarsened by two.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fk::path_functionals_coupled;
use crate::kolmogorov_pde::{evaluate_approximation, solve, Axis, Grid2D, ZakaiSolver};
use crate::model::{build_model, estimate_constants, DerivedCoefficients};
use crate::paths::{sample_observation_p1, ObservationPath, StreamFamily, StreamTag, TimeGrid};
use crate::stats::mean_estimate;

use super::config::GridConfig;

const ORACLE_GROUP: u32 = 0x81_0000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub model: String,
    pub model_params: BTreeMap<String, f64>,
    pub x: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Points `y` for the `v` comparison.
    pub ys: Vec<f64>,
    pub v_paths: usize,
    pub n_obs_paths: usize,
    pub u_paths: usize,
    pub grid: GridConfig,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            model: "ou-tanh".into(),
            model_params: BTreeMap::new(),
            x: 0.0,
            horizon: 0.1,
            ys: vec![-0.6, -0.3, 0.0, 0.3, 0.6],
            v_paths: 100_000,
            n_obs_paths: 20,
            u_paths: 20_000,
            grid: GridConfig::default(),
            seed: 20240501,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    /// `"v"` or `"u"`.
    pub kind: String,
    /// `y` for `v` rows, `Y_T` for `u` rows.
    pub y: f64,
    pub monte_carlo: f64,
    pub std_error: f64,
    pub grid_value: f64,
    pub budget: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub rows: Vec<OracleRow>,
    pub passed: bool,
}

fn row(kind: &str, y: f64, mc: &[f64], mc_coarse: &[f64], grid: f64, grid_alts: &[f64]) -> OracleRow {
    let m = mean_estimate(mc);
    let mc_disc = (m.mean - mean_estimate(mc_coarse).mean).abs();
    let grid_disc: f64 = grid_alts.iter().map(|g| (grid - g).abs()).sum();
    let budget = 3.0 * m.std_error + mc_disc + grid_disc;
    OracleRow {
        kind: kind.into(),
        y,
        monte_carlo: m.mean,
        std_error: m.std_error,
        grid_value: grid,
        budget,
        passed: (m.mean - grid).abs() <= budget,
    }
}

fn coarse_axis(a: &Axis) -> Result<Axis> {
    Axis::new(a.min(), a.max(), (a.n() - 1) / 2 + 1)
}

pub fn oracle_triangle(cfg: &OracleConfig) -> Result<OracleReport> {
    if !cfg.grid.pde_steps.is_multiple_of(2) || !cfg.grid.zakai_steps.is_multiple_of(2) {
        return Err(Error::Config("oracle checks need even step counts".into()));
    }
    let coeffs = DerivedCoefficients::derive(&build_model(&cfg.model, &cfg.model_params)?)?;
    let t = cfg.horizon;
    let g = &cfg.grid;
    let h_inf = estimate_constants(&coeffs, 3.0, 1000)?.h_inf;
    let grid = Grid2D::for_horizon(t, g.x_min, g.x_max, g.n_x, g.n_y, g.y_sigmas, h_inf)?;
    let grid_x2 = Grid2D::new(coarse_axis(&grid.x)?, coarse_axis(&grid.y)?);
    let pde = solve(&grid, t, g.pde_steps, &coeffs)?;
    let pde_dt2 = solve(&grid, t, g.pde_steps / 2, &coeffs)?;
    let pde_dx2 = solve(&grid_x2, t, g.pde_steps, &coeffs)?;
    let x = [cfg.x];
    let mut rows = Vec::new();

    // v through the tilted functional, on a zero observation path (the
    // functional does not depend on it).
    let time = TimeGrid::new(t, g.zakai_steps)?;
    let zero = ObservationPath::from_increments(time, vec![0.0; g.zakai_steps])?;
    let pf = path_functionals_coupled(
        &x,
        &coeffs,
        &zero,
        cfg.v_paths,
        StreamFamily::new(cfg.seed, StreamTag::Auxiliary, ORACLE_GROUP),
    )?;
    for &y in &cfg.ys {
        let fine: Vec<f64> = pf.iter().map(|p| p.0.v_tilted_sample(y)).collect::<Result<_>>()?;
        let coarse: Vec<f64> = pf.iter().map(|p| p.1.v_tilted_sample(y)).collect::<Result<_>>()?;
        let gv = evaluate_approximation(&pde, cfg.x, y)?;
        let alts = [
            evaluate_approximation(&pde_dt2, cfg.x, y)?,
            evaluate_approximation(&pde_dx2, cfg.x, y)?,
        ];
        rows.push(row("v", y, &fine, &coarse, gv, &alts));
    }

    // u along random observation paths.
    let axis = Axis::new(g.x_min, g.x_max, g.n_x)?;
    let zakai = ZakaiSolver::new(axis, time, &coeffs)?;
    let zakai_dt2 = ZakaiSolver::new(axis, time.coarsen()?, &coeffs)?;
    let zakai_dx2 = ZakaiSolver::new(coarse_axis(&axis)?, time, &coeffs)?;
    let obs_family = StreamFamily::new(cfg.seed, StreamTag::Observation, ORACLE_GROUP);
    for p in 0..cfg.n_obs_paths {
        let obs = sample_observation_p1(&time, obs_family.stream(p))?;
        let pf = path_functionals_coupled(
            &x,
            &coeffs,
            &obs,
            cfg.u_paths,
            StreamFamily::new(cfg.seed, StreamTag::Auxiliary, ORACLE_GROUP + 1 + p as u32),
        )?;
        let fine: Vec<f64> = pf.iter().map(|p| p.0.u_sample()).collect::<Result<_>>()?;
        let coarse: Vec<f64> = pf.iter().map(|p| p.1.u_sample()).collect::<Result<_>>()?;
        let gu = zakai.solve(&obs)?.value_at(cfg.x)?;
        let alts = [
            zakai_dt2.solve(&obs.coarsen()?)?.value_at(cfg.x)?,
            zakai_dx2.solve(&obs)?.value_at(cfg.x)?,
        ];
        rows.push(row("u", obs.terminal(), &fine, &coarse, gu, &alts));
    }
    Ok(OracleReport {
        passed: rows.iter().all(|r| r.passed),
        rows,
    })
}
