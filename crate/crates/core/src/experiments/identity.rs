//! Binned test of `E₁[u(T,x) | Y_T − y₀ = y] = e^{y²/2T} v(T,x,y)`.
//!
//! Observation paths are drawn under ℙ₁ and sorted into equal-count bins of
//! `Y_T − y₀`. Within a bin the per-sample differences
//! `u_i − e^{Y_i²/2T} v(T,x,Y_i)` are averaged; their mean divided by its
//! standard error is the bin's standardised deviation. Evaluating the right
//! side at each sample (rather than once at the bin centre) removes the
//! within-bin curvature bias.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fk::{functional_from_increments, Scratch};
use crate::kolmogorov_pde::{evaluate_approximation, Axis, ZakaiSolver};
use crate::paths::{
    sample_brownian, sample_observation_p1, ObservationPath, StreamFamily, StreamTag, TimeGrid,
};
use crate::stats::{mean_estimate, pairwise_sum};

use super::config::{ExperimentConfig, USolver};
use super::harness::{solve_pde, Setup};

/// Stream group reserved for the identity test.
const IDENTITY_GROUP: u32 = 0x80_0000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityConfig {
    pub n_samples: usize,
    pub n_bins: usize,
    /// Bins with fewer samples are flagged.
    pub min_bin_count: usize,
    /// Pass threshold on the largest `|z|`.
    pub z_threshold: f64,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        IdentityConfig {
            n_samples: 100_000,
            n_bins: 20,
            min_bin_count: 30,
            z_threshold: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityBin {
    pub y_lo: f64,
    pub y_hi: f64,
    pub y_center: f64,
    pub count: usize,
    pub mean_u: f64,
    pub mean_rhs: f64,
    /// Right side evaluated at the bin's median `y`.
    pub rhs_center: f64,
    pub std_error: f64,
    pub z: f64,
    pub undersampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub model: String,
    pub x: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_samples: usize,
    pub solver: USolver,
    pub bins: Vec<IdentityBin>,
    pub max_abs_z: f64,
    pub undersampled_bins: usize,
    pub passed: bool,
}

/// `u(T,x)` for every sample path, by the configured solver.
fn u_samples(
    setup: &Setup,
    x: f64,
    grid: &TimeGrid,
    n: usize,
) -> Result<(Vec<f64>, Vec<ObservationPath>)> {
    let cfg = &setup.config;
    let obs_family = StreamFamily::new(cfg.seed, StreamTag::Observation, IDENTITY_GROUP);
    let obs: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| sample_observation_p1(grid, obs_family.stream(i)))
        .collect::<Result<_>>()?;
    let u = match cfg.u_solver {
        USolver::ZakaiSplitting => {
            let g = &cfg.grid;
            let solver = ZakaiSolver::new(Axis::new(g.x_min, g.x_max, g.n_x)?, *grid, &setup.coeffs)?;
            obs.par_iter()
                .map(|o| solver.solve(o)?.value_at(x))
                .collect::<Result<Vec<f64>>>()?
        }
        USolver::FkMc => {
            let inner = cfg.fk_inner_paths;
            if (n as u64) * (inner as u64) > u32::MAX as u64 {
                return Err(Error::Config("too many auxiliary paths for the stream layout".into()));
            }
            let aux = StreamFamily::new(cfg.seed, StreamTag::Auxiliary, IDENTITY_GROUP);
            obs.par_iter()
                .enumerate()
                .map_init(Scratch::default, |scratch, (i, o)| {
                    let mut s = Vec::with_capacity(inner);
                    for j in 0..inner {
                        let inc = sample_brownian(grid, 1, aux.stream(i * inner + j))?;
                        s.push(functional_from_increments(&[x], &setup.coeffs, &inc, Some(o), scratch)?.u_sample()?);
                    }
                    Ok(pairwise_sum(&s) / inner as f64)
                })
                .collect::<Result<Vec<f64>>>()?
        }
    };
    Ok((u, obs))
}

pub fn remark_identity_test(
    x: f64,
    horizon: f64,
    config: &ExperimentConfig,
    opts: &IdentityConfig,
) -> Result<IdentityReport> {
    if opts.n_bins < 2 || opts.n_samples < opts.n_bins {
        return Err(Error::Config(format!(
            "need at least 2 bins and one sample per bin (bins = {}, samples = {})",
            opts.n_bins, opts.n_samples
        )));
    }
    if !(horizon > 0.0 && horizon < 1.0) {
        return Err(Error::Config(format!("T must lie in (0, 1), got {horizon}")));
    }
    let setup = Setup::new(config)?;
    let grid = TimeGrid::new(horizon, config.grid.zakai_steps)?;
    let (u, obs) = u_samples(&setup, x, &grid, opts.n_samples)?;
    let ys: Vec<f64> = obs.iter().map(|o| o.terminal()).collect();
    let max_abs_y = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    let pde = solve_pde(&setup, horizon, max_abs_y, false)?;
    let rhs: Vec<f64> = ys
        .iter()
        .map(|&y| evaluate_approximation(&pde.fine, x, y))
        .collect::<Result<_>>()?;

    // Deviations at rounding level count as zero even when the sample spread
    // is itself at rounding level (deterministic u-solvers, h ≡ 0).
    let floor = 1e-10 * rhs.iter().fold(0.0f64, |m, r| m.max(r.abs()));

    let mut order: Vec<usize> = (0..ys.len()).collect();
    order.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]).then(a.cmp(&b)));
    let n = order.len();
    let mut bins = Vec::with_capacity(opts.n_bins);
    for b in 0..opts.n_bins {
        let idx = &order[b * n / opts.n_bins..(b + 1) * n / opts.n_bins];
        let du: Vec<f64> = idx.iter().map(|&i| u[i]).collect();
        let dr: Vec<f64> = idx.iter().map(|&i| rhs[i]).collect();
        let diff: Vec<f64> = idx.iter().map(|&i| u[i] - rhs[i]).collect();
        let m = mean_estimate(&diff);
        let y_center = ys[idx[idx.len() / 2]];
        let z = if m.mean.abs() <= floor {
            0.0
        } else if m.std_error > 0.0 {
            m.mean / m.std_error
        } else {
            f64::INFINITY.copysign(m.mean)
        };
        bins.push(IdentityBin {
            y_lo: ys[idx[0]],
            y_hi: ys[idx[idx.len() - 1]],
            y_center,
            count: idx.len(),
            mean_u: mean_estimate(&du).mean,
            mean_rhs: mean_estimate(&dr).mean,
            rhs_center: evaluate_approximation(&pde.fine, x, y_center)?,
            std_error: m.std_error,
            z,
            undersampled: idx.len() < opts.min_bin_count,
        });
    }
    let max_abs_z = bins.iter().map(|b| b.z.abs()).fold(0.0, f64::max);
    let undersampled_bins = bins.iter().filter(|b| b.undersampled).count();
    Ok(IdentityReport {
        model: config.model.clone(),
        x,
        horizon,
        n_samples: n,
        solver: config.u_solver,
        bins,
        max_abs_z,
        undersampled_bins,
        passed: max_abs_z < opts.z_threshold,
    })
}
