//! Linear-Gaussian check: the normalised splitting-solver density against the
//! Kalman–Bucy filter.
//!
//! The `kalman` model has an unbounded sensor `h(x) = g x`, so it lies outside
//! the error bound's assumptions; this is a solver validation only.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kolmogorov_pde::{Axis, ZakaiSolver};
use crate::model::{build_model, model_spec, DerivedCoefficients};
use crate::paths::{simulate_signal_and_observation, ObservationPath, StreamFamily, StreamId, StreamTag, RngStream, TimeGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanConfig {
    pub model_params: BTreeMap<String, f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_paths: usize,
    pub steps: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig {
            model_params: BTreeMap::new(),
            horizon: 0.5,
            n_paths: 10,
            steps: 512,
            x_min: -6.0,
            x_max: 6.0,
            n_x: 401,
            tolerance: 0.02,
            seed: 20240501,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanState {
    pub mean: f64,
    pub variance: f64,
}

/// Kalman–Bucy filter for `dX = −θX dt + σ dB`, `dY = gX dt + dW` along an
/// observation path:
/// `dm = −θm dt + gP(dY − gm dt)`, `P' = −2θP + σ² − g²P²`.
/// The mean uses the path's own increments; the Riccati equation is
/// integrated with RK4 on the same grid.
pub fn kalman_bucy(
    obs: &ObservationPath,
    theta: f64,
    sigma: f64,
    gain: f64,
    initial: KalmanState,
) -> KalmanState {
    let riccati = |p: f64| -2.0 * theta * p + sigma * sigma - gain * gain * p * p;
    let dt = obs.grid().dt();
    let mut m = initial.mean;
    let mut p = initial.variance;
    for &dy in obs.increments() {
        m += -theta * m * dt + gain * p * (dy - gain * m * dt);
        let k1 = riccati(p);
        let k2 = riccati(p + 0.5 * dt * k1);
        let k3 = riccati(p + 0.5 * dt * k2);
        let k4 = riccati(p + dt * k3);
        p += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    KalmanState { mean: m, variance: p }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanPathResult {
    pub index: usize,
    pub y_terminal: f64,
    pub kalman_bucy: KalmanState,
    pub zakai: KalmanState,
    /// `|m_Z − m_KB| / max(|m_KB|, √P_KB)`.
    pub mean_rel_error: f64,
    pub var_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanReport {
    pub label: String,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub paths: Vec<KalmanPathResult>,
    pub max_mean_rel_error: f64,
    pub max_var_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn kalman_validation(cfg: &KalmanConfig) -> Result<KalmanReport> {
    if cfg.n_paths == 0 {
        return Err(Error::Config("need at least one observation path".into()));
    }
    let mut params = model_spec("kalman")?.defaults();
    params.extend(cfg.model_params.iter().map(|(k, v)| (k.clone(), *v)));
    let coeffs = DerivedCoefficients::derive(&build_model("kalman", &cfg.model_params)?)?;
    let (theta, sigma, gain) = (params["theta"], params["sigma"], params["gain"]);
    let initial = KalmanState {
        mean: params["u0_mean"],
        variance: params["u0_var"],
    };
    let grid = TimeGrid::new(cfg.horizon, cfg.steps)?;
    let solver = ZakaiSolver::new(Axis::new(cfg.x_min, cfg.x_max, cfg.n_x)?, grid, &coeffs)?;
    let signal = StreamFamily::new(cfg.seed, StreamTag::SignalNoise, 0);
    let noise = StreamFamily::new(cfg.seed, StreamTag::ObservationNoise, 0);
    let prior = Normal::new(initial.mean, initial.variance.sqrt())
        .map_err(|e| Error::Config(format!("invalid prior: {e}")))?;

    let mut paths = Vec::with_capacity(cfg.n_paths);
    for i in 0..cfg.n_paths {
        let mut rng = RngStream::new(cfg.seed, StreamId::new(StreamTag::Misc, 0, i as u32)).rng();
        let x0 = prior.sample(&mut rng);
        let (_, obs) =
            simulate_signal_and_observation(&coeffs, &[x0], &grid, signal.stream(i), noise.stream(i))?;
        let kb = kalman_bucy(&obs, theta, sigma, gain, initial);
        let mom = solver.solve(&obs)?.moments();
        let z = KalmanState {
            mean: mom.mean,
            variance: mom.variance,
        };
        paths.push(KalmanPathResult {
            index: i,
            y_terminal: obs.terminal(),
            kalman_bucy: kb,
            zakai: z,
            mean_rel_error: (z.mean - kb.mean).abs() / kb.mean.abs().max(kb.variance.sqrt()),
            var_rel_error: (z.variance - kb.variance).abs() / kb.variance,
        });
    }
    let max_mean_rel_error = paths.iter().map(|p| p.mean_rel_error).fold(0.0, f64::max);
    let max_var_rel_error = paths.iter().map(|p| p.var_rel_error).fold(0.0, f64::max);
    Ok(KalmanReport {
        label: "validation only: unbounded sensor, outside the error bound's assumptions".into(),
        horizon: cfg.horizon,
        passed: max_mean_rel_error <= cfg.tolerance && max_var_rel_error <= cfg.tolerance,
        paths,
        max_mean_rel_error,
        max_var_rel_error,
        tolerance: cfg.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn riccati_reaches_its_stationary_value() {
        // P' = 0 at P = (−θ + √(θ² + g²σ²)) / g².
        let grid = TimeGrid::new(0.9, 2000).unwrap();
        let obs = ObservationPath::from_increments(grid, vec![0.0; 2000]).unwrap();
        let (theta, sigma, gain): (f64, f64, f64) = (1.0, 1.0, 3.0);
        let p_inf = (-theta + (theta * theta + gain * gain * sigma * sigma).sqrt()) / (gain * gain);
        let s = kalman_bucy(&obs, theta, sigma, gain, KalmanState { mean: 0.0, variance: p_inf });
        assert!((s.variance - p_inf).abs() < 1e-12);
        assert_eq!(s.mean, 0.0);
    }

    #[test]
    fn without_observations_the_mean_decays() {
        let grid = TimeGrid::new(0.5, 4000).unwrap();
        let obs = ObservationPath::from_increments(grid, vec![0.0; 4000]).unwrap();
        let s = kalman_bucy(&obs, 1.0, 1.0, 0.0, KalmanState { mean: 1.0, variance: 0.25 });
        assert!((s.mean - (-0.5f64).exp()).abs() < 1e-4);
        // P(t) = σ²/2θ + (P₀ − σ²/2θ) e^{−2θt}
        let p = 0.5 + (0.25 - 0.5) * (-1.0f64).exp();
        assert!((s.variance - p).abs() < 1e-10);
    }
}
