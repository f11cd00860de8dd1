//! Monte Carlo estimators of the Feynman–Kac representations of `u(T,x)` and
//! `v(T,x,y)`, and of their coupled difference.
//!
//! Every estimator is built from [`PathFunctional`]s: the handful of scalars
//! of one auxiliary path that the representations depend on. Callers that
//! need their own nesting (the L^q harness, the identity test) work with the
//! functionals directly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DerivedCoefficients;
use crate::paths::{
    euler_maruyama_into, sample_brownian, Increments, ObservationPath, StreamFamily, TimeGrid,
};
use crate::stats::mean_estimate;

/// Largest exponent accepted before `exp` is considered an overflow.
const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FKEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub dt: f64,
}

/// Scalars of one auxiliary path `ξ̂` on a grid of `n` steps:
///
/// * `u0_terminal = u₀(ξ̂_T)`
/// * `int_c = Σ c(ξ̂_k) dt`, `int_h = Σ h(ξ̂_k) dt`, `int_h2 = Σ h(ξ̂_k)² dt`
/// * `ito_reversed = Σ h(ξ̂_{n−k}) ΔY_k` (zero when no observation was given)
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathFunctional {
    pub u0_terminal: f64,
    pub int_c: f64,
    pub int_h: f64,
    pub int_h2: f64,
    pub ito_reversed: f64,
    pub horizon: f64,
}

fn guarded_exp(scale: f64, exponent: f64) -> Result<f64> {
    if scale == 0.0 {
        return Ok(0.0);
    }
    if exponent > MAX_EXPONENT || exponent.is_nan() {
        return Err(Error::Overflow { exponent });
    }
    Ok(scale * exponent.exp())
}

impl PathFunctional {
    /// `u₀(ξ̂_T) e^{∫c} e^{∫h(ξ̂_{T−s})dY − ½∫h²}`.
    pub fn u_sample(&self) -> Result<f64> {
        guarded_exp(
            self.u0_terminal,
            self.int_c + self.ito_reversed - 0.5 * self.int_h2,
        )
    }

    /// `u₀(ξ̂_T) e^{∫c} e^{−(y − ∫h)²/2T}`.
    pub fn v_sample(&self, y: f64) -> Result<f64> {
        let r = y - self.int_h;
        guarded_exp(self.u0_terminal, self.int_c - r * r / (2.0 * self.horizon))
    }

    /// `e^{y²/2T}` times [`v_sample`](Self::v_sample), with the Gaussian
    /// factors cancelled analytically: `u₀ e^{∫c} e^{y∫h/T − (∫h)²/2T}`.
    pub fn v_tilted_sample(&self, y: f64) -> Result<f64> {
        let t = self.horizon;
        guarded_exp(
            self.u0_terminal,
            self.int_c + y * self.int_h / t - self.int_h * self.int_h / (2.0 * t),
        )
    }

    /// Pathwise difference `u_sample − v_tilted_sample(Y_T − y₀)`.
    pub fn difference_sample(&self, y_terminal: f64) -> Result<f64> {
        Ok(self.u_sample()? - self.v_tilted_sample(y_terminal)?)
    }

    /// `u₀(ξ̂_T) e^{∫c}`, the weight shared by both representations.
    pub fn weight(&self) -> Result<f64> {
        guarded_exp(self.u0_terminal, self.int_c)
    }
}

/// Per-worker buffers reused across paths.
#[derive(Default)]
pub(crate) struct Scratch {
    states: Vec<f64>,
}

pub(crate) fn functional_from_increments(
    x: &[f64],
    coeffs: &DerivedCoefficients,
    increments: &Increments,
    obs: Option<&ObservationPath>,
    scratch: &mut Scratch,
) -> Result<PathFunctional> {
    let grid = increments.grid();
    if let Some(o) = obs {
        if o.grid() != grid {
            return Err(Error::Config(
                "observation path and auxiliary path use different time grids".into(),
            ));
        }
    }
    euler_maruyama_into(x, coeffs, increments, |c, s, out| c.b_star(s, out), &mut scratch.states)?;
    let d = coeffs.dim();
    let n = grid.n_steps();
    let dt = grid.dt();
    let states = &scratch.states;
    let state = |k: usize| &states[k * d..(k + 1) * d];

    let mut sum_c = 0.0;
    let mut sum_h = 0.0;
    let mut sum_h2 = 0.0;
    for k in 0..n {
        let s = state(k);
        let h = coeffs.h(s);
        sum_c += coeffs.c(s);
        sum_h += h;
        sum_h2 += h * h;
    }
    let mut ito = 0.0;
    if let Some(o) = obs {
        for (k, dy) in o.increments().iter().enumerate() {
            ito += coeffs.h(state(n - k)) * dy;
        }
    }
    let terminal = state(n);
    let u0_terminal = coeffs.u0(terminal);
    let out = PathFunctional {
        u0_terminal,
        int_c: sum_c * dt,
        int_h: sum_h * dt,
        int_h2: sum_h2 * dt,
        ito_reversed: ito,
        horizon: grid.horizon(),
    };
    if !(out.u0_terminal.is_finite()
        && out.int_c.is_finite()
        && out.int_h.is_finite()
        && out.int_h2.is_finite()
        && out.ito_reversed.is_finite())
    {
        return Err(Error::NonFinite {
            what: "path functional",
            x: terminal.to_vec(),
        });
    }
    Ok(out)
}

/// Functionals of `n_paths` auxiliary paths started at `x`, path `i` driven by
/// `family.stream(i)`. Results are in path order regardless of scheduling.
pub fn path_functionals(
    x: &[f64],
    coeffs: &DerivedCoefficients,
    grid: &TimeGrid,
    obs: Option<&ObservationPath>,
    n_paths: usize,
    family: StreamFamily,
) -> Result<Vec<PathFunctional>> {
    if n_paths == 0 {
        return Err(Error::Config("at least one auxiliary path is required".into()));
    }
    let d = coeffs.dim();
    (0..n_paths)
        .into_par_iter()
        .map_init(Scratch::default, |scratch, i| {
            let inc = sample_brownian(grid, d, family.stream(i))?;
            functional_from_increments(x, coeffs, &inc, obs, scratch)
        })
        .collect()
}

/// Like [`path_functionals`], but each auxiliary path is also replayed on the
/// grid with half the steps using the pairwise-summed increments. Returns
/// `(fine, coarse)` pairs; `obs` must live on the fine grid.
pub fn path_functionals_coupled(
    x: &[f64],
    coeffs: &DerivedCoefficients,
    obs: &ObservationPath,
    n_paths: usize,
    family: StreamFamily,
) -> Result<Vec<(PathFunctional, PathFunctional)>> {
    if n_paths == 0 {
        return Err(Error::Config("at least one auxiliary path is required".into()));
    }
    let grid = obs.grid();
    let coarse_obs = obs.coarsen()?;
    let d = coeffs.dim();
    (0..n_paths)
        .into_par_iter()
        .map_init(Scratch::default, |scratch, i| {
            let inc = sample_brownian(&grid, d, family.stream(i))?;
            let fine = functional_from_increments(x, coeffs, &inc, Some(obs), scratch)?;
            let coarse =
                functional_from_increments(x, coeffs, &inc.coarsen()?, Some(&coarse_obs), scratch)?;
            Ok((fine, coarse))
        })
        .collect()
}

fn estimate(samples: &[f64], dt: f64) -> FKEstimate {
    let m = mean_estimate(samples);
    FKEstimate {
        value: m.mean,
        std_error: m.std_error,
        n_paths: samples.len(),
        dt,
    }
}

/// Monte Carlo estimate of `u(T,x)` for a fixed observation path.
pub fn fk_u(
    x: &[f64],
    obs: &ObservationPath,
    coeffs: &DerivedCoefficients,
    n_paths: usize,
    family: StreamFamily,
) -> Result<FKEstimate> {
    let grid = obs.grid();
    let pf = path_functionals(x, coeffs, &grid, Some(obs), n_paths, family)?;
    let s: Vec<f64> = pf.iter().map(|p| p.u_sample()).collect::<Result<_>>()?;
    Ok(estimate(&s, grid.dt()))
}

/// Monte Carlo estimate of `v(T,x,y)`.
pub fn fk_v(
    x: &[f64],
    y: f64,
    coeffs: &DerivedCoefficients,
    grid: &TimeGrid,
    n_paths: usize,
    family: StreamFamily,
) -> Result<FKEstimate> {
    let pf = path_functionals(x, coeffs, grid, None, n_paths, family)?;
    let s: Vec<f64> = pf.iter().map(|p| p.v_sample(y)).collect::<Result<_>>()?;
    Ok(estimate(&s, grid.dt()))
}

/// Monte Carlo estimate of `u(T,x) − e^{(Y_T−y₀)²/2T} v(T,x,Y_T−y₀)` with both
/// terms evaluated on the same auxiliary paths.
pub fn coupled_difference(
    x: &[f64],
    obs: &ObservationPath,
    coeffs: &DerivedCoefficients,
    n_paths: usize,
    family: StreamFamily,
) -> Result<FKEstimate> {
    let grid = obs.grid();
    let y = obs.terminal();
    let pf = path_functionals(x, coeffs, &grid, Some(obs), n_paths, family)?;
    let s: Vec<f64> = pf
        .iter()
        .map(|p| p.difference_sample(y))
        .collect::<Result<_>>()?;
    Ok(estimate(&s, grid.dt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::lemma_bound;
    use crate::model::{build_model, gaussian_pdf, Field, FilteringModel};
    use crate::paths::{sample_observation_p1, RngStream, StreamId, StreamTag};
    use std::collections::BTreeMap;

    fn brownian_model(h: f64, sigma: f64, eps2: f64) -> DerivedCoefficients {
        let m = FilteringModel::new(
            "bm",
            1,
            Field::vector(1, |_, out| out[0] = 0.0),
            Field::matrix(1, 1, move |_, out| out[0] = sigma),
            move |_| h,
            move |x| gaussian_pdf(x[0], 0.0, eps2),
        )
        .unwrap();
        DerivedCoefficients::derive(&m).unwrap()
    }

    fn fam(group: u32) -> StreamFamily {
        StreamFamily::new(42, StreamTag::Auxiliary, group)
    }

    fn obs(t: f64, n: usize, idx: u32) -> ObservationPath {
        let g = TimeGrid::new(t, n).unwrap();
        sample_observation_p1(&g, RngStream::new(42, StreamId::new(StreamTag::Observation, 0, idx)))
            .unwrap()
    }

    #[test]
    fn heat_kernel_oracle() {
        let eps2 = 0.1;
        let t = 0.3;
        let c = brownian_model(0.0, 1.0, eps2);
        let o = obs(t, 16, 0);
        for &x in &[0.0, 0.4] {
            let e = fk_u(&[x], &o, &c, 200_000, fam(1)).unwrap();
            let exact = gaussian_pdf(x, 0.0, eps2 + t);
            // b* = 0 and σ = 1: Euler–Maruyama is exact here, no dt term.
            assert!((e.value - exact).abs() < 3.0 * e.std_error, "{} vs {exact}", e.value);
        }
    }

    #[test]
    fn constant_sensor_factorizes() {
        let t = 0.25;
        let h0 = 0.7;
        let c = brownian_model(h0, 1.0, 0.2);
        let o = obs(t, 32, 3);
        let with_h = fk_u(&[0.1], &o, &c, 50_000, fam(2)).unwrap();
        let base = brownian_model(0.0, 1.0, 0.2);
        let without = fk_u(&[0.1], &o, &base, 50_000, fam(2)).unwrap();
        let factor = (h0 * o.terminal() - 0.5 * h0 * h0 * t).exp();
        // Same streams: the factor is exact per path up to rounding.
        assert!((with_h.value - without.value * factor).abs() < 1e-12 * with_h.value.abs().max(1.0));
        assert!((with_h.std_error - without.std_error * factor).abs() < 1e-9);
    }

    #[test]
    fn frozen_path_is_deterministic() {
        let m = FilteringModel::new(
            "frozen",
            1,
            Field::vector(1, |_, out| out[0] = 0.0),
            Field::matrix(1, 1, |_, out| out[0] = 0.0),
            |x| x[0].sin(),
            |x| gaussian_pdf(x[0], 0.0, 1.0),
        )
        .unwrap();
        let c = DerivedCoefficients::derive(&m).unwrap();
        let g = TimeGrid::new(0.2, 8).unwrap();
        let x = 0.3;
        let v = fk_v(&[x], 0.5, &c, &g, 1, fam(0)).unwrap();
        let int_h: f64 = (0..8).map(|_| x.sin() * g.dt()).sum();
        let exact = gaussian_pdf(x, 0.0, 1.0) * (-(0.5 - int_h).powi(2) / 0.4).exp();
        assert!((v.value - exact).abs() < 1e-15);

        let zero = DerivedCoefficients::derive(
            &FilteringModel::new(
                "frozen0",
                1,
                Field::vector(1, |_, out| out[0] = 0.0),
                Field::matrix(1, 1, |_, out| out[0] = 0.0),
                |_| 0.0,
                |x| gaussian_pdf(x[0], 0.0, 1.0),
            )
            .unwrap(),
        )
        .unwrap();
        let u = fk_u(&[x], &obs(0.2, 8, 1), &zero, 1, fam(0)).unwrap();
        assert_eq!(u.value, gaussian_pdf(x, 0.0, 1.0));
        assert_eq!(u.std_error, 0.0);
    }

    #[test]
    fn v_without_sensor_factorizes() {
        let c = brownian_model(0.0, 1.0, 0.3);
        let g = TimeGrid::new(0.2, 10).unwrap();
        let y = 0.3;
        let v = fk_v(&[0.0], y, &c, &g, 1000, fam(5)).unwrap();
        let pf = path_functionals(&[0.0], &c, &g, None, 1000, fam(5)).unwrap();
        let w: Vec<f64> = pf.iter().map(|p| p.weight().unwrap()).collect();
        let mw = mean_estimate(&w).mean;
        assert!((v.value - (-y * y / 0.4).exp() * mw).abs() < 1e-14);
    }

    #[test]
    fn v_envelope_far_from_origin() {
        let m = build_model("ou-tanh", &BTreeMap::new()).unwrap();
        let c = DerivedCoefficients::derive(&m).unwrap();
        let t = 0.1;
        let g = TimeGrid::new(t, 32).unwrap();
        let y = 10.0 * t.sqrt();
        let v = fk_v(&[0.0], y, &c, &g, 5000, fam(6)).unwrap();
        // |h| ≤ 1, u₀ ≤ 1/√(2π·0.25), c = θ = 1.
        let u0_inf = gaussian_pdf(0.0, 0.0, 0.25);
        let env = (-(y - t).powi(2) / (2.0 * t)).exp() * u0_inf * t.exp();
        assert!(v.value <= env);
        assert!(v.value >= 0.0);
    }

    #[test]
    fn difference_vanishes_for_constant_or_zero_sensor() {
        for h in [0.0, 0.8] {
            let c = brownian_model(h, 1.0, 0.25);
            let o = obs(0.2, 20, 7);
            let pf = path_functionals(&[0.2], &c, &o.grid(), Some(&o), 200, fam(8)).unwrap();
            for p in &pf {
                let d = p.difference_sample(o.terminal()).unwrap();
                assert!(d.abs() <= 1e-13 * p.u_sample().unwrap().max(1e-300), "h={h} d={d}");
            }
        }
    }

    #[test]
    fn coupling_identity() {
        let m = build_model("ou-tanh", &BTreeMap::new()).unwrap();
        let c = DerivedCoefficients::derive(&m).unwrap();
        let o = obs(0.1, 32, 9);
        let y = o.terminal();
        let u = fk_u(&[0.0], &o, &c, 4000, fam(9)).unwrap();
        let v = fk_v(&[0.0], y, &c, &o.grid(), 4000, fam(9)).unwrap();
        let d = coupled_difference(&[0.0], &o, &c, 4000, fam(9)).unwrap();
        let uncoupled = u.value - (y * y / 0.2).exp() * v.value;
        assert!((uncoupled - d.value).abs() < 1e-12 * u.value);
    }

    #[test]
    fn coupling_reduces_variance() {
        let m = build_model("ou-tanh", &BTreeMap::new()).unwrap();
        let c = DerivedCoefficients::derive(&m).unwrap();
        let o = obs(0.1, 32, 10);
        let n = 4000;
        let d = coupled_difference(&[0.0], &o, &c, n, fam(10)).unwrap();
        let u = fk_u(&[0.0], &o, &c, n, fam(10)).unwrap();
        let pf = path_functionals(&[0.0], &c, &o.grid(), None, n, fam(11)).unwrap();
        let vt: Vec<f64> = pf.iter().map(|p| p.v_tilted_sample(o.terminal()).unwrap()).collect();
        let v = mean_estimate(&vt);
        let uncoupled_se = (u.std_error.powi(2) + v.std_error.powi(2)).sqrt();
        assert!(d.std_error <= uncoupled_se);
    }

    #[test]
    fn coupled_difference_within_lemma_envelope() {
        // Conditionally on ξ̂ the difference is the Lemma with f(s) = h(ξ̂_{T−s})
        // and g ≡ (1/T)∫h, so E₁|diff| ≤ Ê[u₀ e^{∫c} · bound(f, g)].
        let m = build_model("ou-tanh", &BTreeMap::new()).unwrap();
        let c = DerivedCoefficients::derive(&m).unwrap();
        let t = 0.1;
        let n_steps = 32;
        let g = TimeGrid::new(t, n_steps).unwrap();
        let n_obs = 400;
        let diffs: Vec<f64> = (0..n_obs)
            .map(|i| {
                coupled_difference(&[0.0], &obs(t, n_steps, 100 + i), &c, 200, fam(12))
                    .unwrap()
                    .value
                    .abs()
            })
            .collect();
        let lhs = mean_estimate(&diffs);

        let family = fam(12);
        let env: Vec<f64> = (0..2000)
            .map(|i| {
                let inc = sample_brownian(&g, 1, family.stream(i)).unwrap();
                let p = crate::paths::simulate_xi_with(&[0.0], &c, &inc).unwrap();
                let f: Vec<f64> = (0..n_steps).map(|k| c.h(p.state(n_steps - k))).collect();
                let gm = (0..n_steps).map(|k| c.h(p.state(k))).sum::<f64>() / n_steps as f64;
                let f_sup = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let l2 = (f.iter().map(|v| (v - gm).powi(2)).sum::<f64>() * g.dt()).sqrt();
                let int_c: f64 = (0..n_steps).map(|k| c.c(p.state(k)) * g.dt()).sum();
                let w = c.u0(p.terminal()) * int_c.exp();
                w * lemma_bound(f_sup, gm.abs(), l2, t, 2.0, 2.0).unwrap()
            })
            .collect();
        let rhs = mean_estimate(&env);
        assert!(lhs.mean <= rhs.mean + 3.0 * (lhs.std_error + rhs.std_error));
    }

    #[test]
    fn std_error_scales_with_paths() {
        let m = build_model("ou-tanh", &BTreeMap::new()).unwrap();
        let c = DerivedCoefficients::derive(&m).unwrap();
        let o = obs(0.2, 16, 11);
        let a = fk_u(&[0.0], &o, &c, 2000, fam(13)).unwrap();
        let b = fk_u(&[0.0], &o, &c, 32_000, fam(14)).unwrap();
        let ratio = a.std_error / b.std_error;
        assert!((ratio - 4.0).abs() < 0.6, "ratio {ratio}");
    }

    #[test]
    fn overflow_is_reported() {
        let p = PathFunctional {
            u0_terminal: 1.0,
            int_c: 800.0,
            int_h: 0.0,
            int_h2: 0.0,
            ito_reversed: 0.0,
            horizon: 0.1,
        };
        assert!(matches!(p.u_sample(), Err(Error::Overflow { .. })));
    }

    #[test]
    fn coupled_grids_share_noise() {
        let m = build_model("ou-tanh", &BTreeMap::new()).unwrap();
        let c = DerivedCoefficients::derive(&m).unwrap();
        let o = obs(0.2, 64, 12);
        let pairs = path_functionals_coupled(&[0.0], &c, &o, 500, fam(15)).unwrap();
        let fine = path_functionals(&[0.0], &c, &o.grid(), Some(&o), 500, fam(15)).unwrap();
        for (p, f) in pairs.iter().zip(&fine) {
            assert_eq!(p.0, *f);
        }
        let gap: Vec<f64> = pairs
            .iter()
            .map(|(f, c)| (f.u_sample().unwrap() - c.u_sample().unwrap()).abs())
            .collect();
        let mean_u: f64 = fine.iter().map(|p| p.u_sample().unwrap()).sum::<f64>() / 500.0;
        assert!(mean_estimate(&gap).mean < 0.2 * mean_u);
    }
}
