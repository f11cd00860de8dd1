//! Time grids, reproducible Brownian increments, Euler–Maruyama paths and
//! pathwise Itô sums.
//!
//! Randomness comes from ChaCha8 keyed by a `(seed, stream)` pair. ChaCha is
//! counter based: every stream id selects an independent keystream, so paths
//! can be generated in any order on any number of threads and still be
//! bit-identical.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::model::DerivedCoefficients;

/// Uniform grid `t_k = k·T/n` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::EmptyGrid);
        }
        if !(horizon > 0.0 && horizon <= 1.0) {
            return Err(Error::Domain(format!(
                "time horizon must lie in (0, 1], got {horizon}"
            )));
        }
        Ok(TimeGrid { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Node `t_k`; the last node is exactly `T`.
    pub fn node(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.node(k)).collect()
    }

    /// The grid with every other node removed.
    pub fn coarsen(&self) -> Result<Self> {
        if !self.n_steps.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "cannot coarsen a grid with an odd number of steps ({})",
                self.n_steps
            )));
        }
        TimeGrid::new(self.horizon, self.n_steps / 2)
    }
}

/// Purpose tag of a random stream; keeps unrelated consumers disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StreamTag {
    Observation = 1,
    Auxiliary = 2,
    SignalNoise = 3,
    ObservationNoise = 4,
    Lemma = 5,
    Misc = 6,
}

/// 64-bit stream identifier: `tag (8 bits) | group (24 bits) | index (32 bits)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId(pub u64);

impl StreamId {
    pub fn new(tag: StreamTag, group: u32, index: u32) -> Self {
        StreamId(((tag as u64) << 56) | (((group & 0x00FF_FFFF) as u64) << 32) | index as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: StreamId,
}

impl RngStream {
    pub fn new(seed: u64, stream: StreamId) -> Self {
        RngStream { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream.0);
        rng
    }
}

/// A family of streams sharing seed, tag and group, indexed by path number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFamily {
    pub seed: u64,
    pub tag: StreamTag,
    pub group: u32,
}

impl StreamFamily {
    pub fn new(seed: u64, tag: StreamTag, group: u32) -> Self {
        StreamFamily { seed, tag, group }
    }

    pub fn stream(&self, index: usize) -> RngStream {
        RngStream::new(self.seed, StreamId::new(self.tag, self.group, index as u32))
    }
}

/// Brownian increments on a grid, stored step-major (`n_steps × dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct Increments {
    grid: TimeGrid,
    dim: usize,
    data: Vec<f64>,
}

impl Increments {
    pub fn from_vec(grid: TimeGrid, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.n_steps() * dim {
            return Err(Error::Length {
                what: "increments",
                expected: grid.n_steps() * dim,
                got: data.len(),
            });
        }
        Ok(Increments { grid, dim, data })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn step(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Increments of the same Brownian path on the grid with half the steps:
    /// each coarse increment is the sum of two consecutive fine ones.
    pub fn coarsen(&self) -> Result<Self> {
        let grid = self.grid.coarsen()?;
        let d = self.dim;
        let mut data = Vec::with_capacity(self.data.len() / 2);
        for k in 0..grid.n_steps() {
            for i in 0..d {
                data.push(self.data[2 * k * d + i] + self.data[(2 * k + 1) * d + i]);
            }
        }
        Ok(Increments { grid, dim: d, data })
    }
}

/// I.i.d. `N(0, dt)` increments in `dim` components, deterministic in the stream.
pub fn sample_brownian(grid: &TimeGrid, dim: usize, stream: RngStream) -> Result<Increments> {
    if dim == 0 {
        return Err(Error::Config("Brownian dimension must be positive".into()));
    }
    let sd = grid.dt().sqrt();
    let mut rng = stream.rng();
    let data = (0..grid.n_steps() * dim)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(Increments {
        grid: *grid,
        dim,
        data,
    })
}

/// A discretised trajectory in `ℝ^d`, `n_steps + 1` states stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    grid: TimeGrid,
    dim: usize,
    states: Vec<f64>,
    lineage: Option<RngStream>,
}

impl SamplePath {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lineage(&self) -> Option<RngStream> {
        self.lineage
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    #[inline]
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.grid.n_steps())
    }
}

/// Euler–Maruyama for `dξ = b*(ξ)dt + σ(ξ)dB̂`, `ξ₀ = x0`, writing
/// `n_steps + 1` states into `states`.
pub(crate) fn euler_maruyama_into(
    x0: &[f64],
    coeffs: &DerivedCoefficients,
    increments: &Increments,
    drift: impl Fn(&DerivedCoefficients, &[f64], &mut [f64]),
    states: &mut Vec<f64>,
) -> Result<()> {
    let d = coeffs.dim();
    if x0.len() != d {
        return Err(Error::Dimension {
            what: "initial point",
            expected: d,
            got: x0.len(),
        });
    }
    if increments.dim() != d {
        return Err(Error::Dimension {
            what: "Brownian increments",
            expected: d,
            got: increments.dim(),
        });
    }
    let grid = increments.grid();
    let dt = grid.dt();
    let n = grid.n_steps();
    states.clear();
    states.reserve((n + 1) * d);
    states.extend_from_slice(x0);

    let mut b: SmallVec<[f64; 4]> = SmallVec::from_elem(0.0, d);
    let mut sigma: SmallVec<[f64; 16]> = SmallVec::from_elem(0.0, d * d);
    let mut cur: SmallVec<[f64; 4]> = x0.iter().copied().collect();
    for k in 0..n {
        drift(coeffs, &cur, &mut b);
        coeffs.sigma(&cur, &mut sigma);
        let dw = increments.step(k);
        for i in 0..d {
            let mut noise = 0.0;
            for j in 0..d {
                noise += sigma[i * d + j] * dw[j];
            }
            cur[i] += b[i] * dt + noise;
        }
        if cur.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: k + 1 });
        }
        states.extend_from_slice(&cur);
    }
    Ok(())
}

/// The auxiliary diffusion `ξ̂` driven by the given increments.
pub fn simulate_xi_with(
    x0: &[f64],
    coeffs: &DerivedCoefficients,
    increments: &Increments,
) -> Result<SamplePath> {
    let mut states = Vec::new();
    euler_maruyama_into(x0, coeffs, increments, |c, x, out| c.b_star(x, out), &mut states)?;
    Ok(SamplePath {
        grid: increments.grid(),
        dim: coeffs.dim(),
        states,
        lineage: None,
    })
}

/// The auxiliary diffusion `ξ̂` started at `x0`, driven by a fresh stream.
pub fn simulate_xi(
    x0: &[f64],
    coeffs: &DerivedCoefficients,
    grid: &TimeGrid,
    stream: RngStream,
) -> Result<SamplePath> {
    let inc = sample_brownian(grid, coeffs.dim(), stream)?;
    let mut path = simulate_xi_with(x0, coeffs, &inc)?;
    path.lineage = Some(stream);
    Ok(path)
}

/// Observation path `Y − y₀` on a grid, with its increments.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPath {
    grid: TimeGrid,
    values: Vec<f64>,
    increments: Vec<f64>,
}

impl ObservationPath {
    /// Builds the path by cumulative summation, so
    /// `values[k + 1] − values[k] == increments[k]` up to the rounding of
    /// a single addition, and `values[0] == 0`.
    pub fn from_increments(grid: TimeGrid, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.n_steps() {
            return Err(Error::Length {
                what: "observation increments",
                expected: grid.n_steps(),
                got: increments.len(),
            });
        }
        let mut values = Vec::with_capacity(increments.len() + 1);
        let mut acc = 0.0;
        values.push(acc);
        for dy in &increments {
            acc += dy;
            values.push(acc);
        }
        Ok(ObservationPath {
            grid,
            values,
            increments,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `Y_T − y₀`.
    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn coarsen(&self) -> Result<Self> {
        let grid = self.grid.coarsen()?;
        let inc = self
            .increments
            .chunks_exact(2)
            .map(|p| p[0] + p[1])
            .collect();
        ObservationPath::from_increments(grid, inc)
    }
}

/// Under the reference measure `Y − y₀` is a standard Brownian motion; this
/// is the sampler behind every error-bound experiment.
pub fn sample_observation_p1(grid: &TimeGrid, stream: RngStream) -> Result<ObservationPath> {
    let inc = sample_brownian(grid, 1, stream)?;
    ObservationPath::from_increments(*grid, inc.data)
}

/// Signal `X` and observation `Y − y₀` under the physical measure:
/// `X_{k+1} = X_k + b(X_k)dt + σ(X_k)ΔB_k`, `ΔY_k = h(X_k)dt + ΔW_k`.
pub fn simulate_signal_and_observation(
    coeffs: &DerivedCoefficients,
    x0: &[f64],
    grid: &TimeGrid,
    signal_stream: RngStream,
    observation_stream: RngStream,
) -> Result<(SamplePath, ObservationPath)> {
    let d = coeffs.dim();
    let db = sample_brownian(grid, d, signal_stream)?;
    let dw = sample_brownian(grid, 1, observation_stream)?;
    let mut states = Vec::new();
    euler_maruyama_into(
        x0,
        coeffs,
        &db,
        |c, x, out| c.model().drift(x, out),
        &mut states,
    )?;
    let dt = grid.dt();
    let dy = (0..grid.n_steps())
        .map(|k| coeffs.h(&states[k * d..(k + 1) * d]) * dt + dw.data[k])
        .collect();
    let signal = SamplePath {
        grid: *grid,
        dim: d,
        states,
        lineage: Some(signal_stream),
    };
    Ok((signal, ObservationPath::from_increments(*grid, dy)?))
}

/// Left-point sum `Σ_k f_k ΔY_k`, with `f_k` the integrand on `[t_k, t_{k+1})`.
pub fn pathwise_ito_integral(f_values: &[f64], obs: &ObservationPath) -> Result<f64> {
    if f_values.len() != obs.increments.len() {
        return Err(Error::Length {
            what: "integrand",
            expected: obs.increments.len(),
            got: f_values.len(),
        });
    }
    let mut acc = 0.0;
    for (f, dy) in f_values.iter().zip(&obs.increments) {
        acc += f * dy;
    }
    Ok(acc)
}

/// The time-reversed integrand `s ↦ h(ξ̂_{T−s})`: on `[t_k, t_{k+1})` it takes
/// the value `h(states[n − k])`.
pub fn reversed_sensor_values(path: &SamplePath, coeffs: &DerivedCoefficients) -> Vec<f64> {
    let n = path.grid.n_steps();
    (0..n).map(|k| coeffs.h(path.state(n - k))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, Field, FilteringModel};
    use std::collections::BTreeMap;

    fn ou() -> DerivedCoefficients {
        // b = -x gives b* = +x; flip the sign to get an Ornstein-Uhlenbeck ξ̂.
        let m = FilteringModel::new(
            "ou-xi",
            1,
            Field::vector(1, |x, out| out[0] = x[0]),
            Field::matrix(1, 1, |_, out| out[0] = 1.0),
            |_| 0.0,
            |_| 1.0,
        )
        .unwrap();
        DerivedCoefficients::derive(&m).unwrap()
    }

    #[test]
    fn empty_grid_is_rejected() {
        assert!(matches!(TimeGrid::new(0.5, 0), Err(Error::EmptyGrid)));
    }

    #[test]
    fn last_node_is_pinned() {
        let g = TimeGrid::new(0.3, 7).unwrap();
        assert_eq!(g.node(7), 0.3);
        assert_eq!(g.node(0), 0.0);
        let nodes = g.nodes();
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn brownian_moments() {
        let g = TimeGrid::new(0.5, 1_000_000).unwrap();
        let inc = sample_brownian(&g, 1, RngStream::new(7, StreamId(3))).unwrap();
        let n = inc.as_slice().len() as f64;
        let mean = inc.as_slice().iter().sum::<f64>() / n;
        let var = inc.as_slice().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4.0 * (g.dt() / n).sqrt(), "mean {mean}");
        assert!((var / g.dt() - 1.0).abs() < 0.01, "var ratio {}", var / g.dt());
    }

    #[test]
    fn streams_are_reproducible_and_independent() {
        let g = TimeGrid::new(1.0, 1_000_000).unwrap();
        let s1 = RngStream::new(11, StreamId::new(StreamTag::Observation, 0, 1));
        let s2 = RngStream::new(11, StreamId::new(StreamTag::Observation, 0, 2));
        let a = sample_brownian(&g, 1, s1).unwrap();
        assert_eq!(a, sample_brownian(&g, 1, s1).unwrap());
        let b = sample_brownian(&g, 1, s2).unwrap();
        let n = a.as_slice().len() as f64;
        let dot: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum();
        let rho = dot / (n * g.dt());
        assert!(rho.abs() < 4.0 / n.sqrt(), "rho {rho}");
    }

    #[test]
    fn coarsened_increments_are_pairwise_sums() {
        let g = TimeGrid::new(0.2, 64).unwrap();
        let fine = sample_brownian(&g, 2, RngStream::new(1, StreamId(9))).unwrap();
        let coarse = fine.coarsen().unwrap();
        for k in 0..32 {
            for i in 0..2 {
                assert_eq!(coarse.step(k)[i], fine.step(2 * k)[i] + fine.step(2 * k + 1)[i]);
            }
        }
        assert!(TimeGrid::new(0.2, 3).unwrap().coarsen().is_err());
    }

    #[test]
    fn frozen_xi_is_constant() {
        let m = FilteringModel::new(
            "frozen",
            2,
            Field::vector(2, |_, out| out.fill(0.0)),
            Field::matrix(2, 2, |_, out| out.fill(0.0)),
            |_| 0.0,
            |_| 1.0,
        )
        .unwrap();
        let c = DerivedCoefficients::derive(&m).unwrap();
        let g = TimeGrid::new(0.5, 10).unwrap();
        let p = simulate_xi(&[0.3, -0.2], &c, &g, RngStream::new(0, StreamId(0))).unwrap();
        for k in 0..=10 {
            assert_eq!(p.state(k), &[0.3, -0.2]);
        }
    }

    #[test]
    fn ou_terminal_moments() {
        let c = ou();
        let t = 0.5;
        let g = TimeGrid::new(t, 200).unwrap();
        let x0 = 1.0;
        let n = 100_000;
        let fam = StreamFamily::new(5, StreamTag::Auxiliary, 0);
        let ends: Vec<f64> = (0..n)
            .map(|i| simulate_xi(&[x0], &c, &g, fam.stream(i)).unwrap().terminal()[0])
            .collect();
        let mean = ends.iter().sum::<f64>() / n as f64;
        let var = ends.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let exact_mean = x0 * (-t).exp();
        let exact_var = (1.0 - (-2.0 * t).exp()) / 2.0;
        let dt = g.dt();
        // Euler–Maruyama bias is O(dt); allow 3 s.e. plus dt.
        assert!((mean - exact_mean).abs() < 3.0 * (exact_var / n as f64).sqrt() + dt);
        let var_se = exact_var * (2.0 / n as f64).sqrt();
        assert!((var - exact_var).abs() < 3.0 * var_se + dt);
    }

    #[test]
    fn zero_sensor_observation_is_pure_noise() {
        let m = build_model("zero-h", &BTreeMap::new()).unwrap();
        let c = DerivedCoefficients::derive(&m).unwrap();
        let g = TimeGrid::new(0.4, 16).unwrap();
        let sig = RngStream::new(2, StreamId::new(StreamTag::SignalNoise, 0, 0));
        let obs_s = RngStream::new(2, StreamId::new(StreamTag::ObservationNoise, 0, 0));
        let (x, y) = simulate_signal_and_observation(&c, &[0.1], &g, sig, obs_s).unwrap();
        let dw = sample_brownian(&g, 1, obs_s).unwrap();
        assert_eq!(y.increments(), dw.as_slice());
        assert_eq!(x.len(), 17);
        assert_eq!(y.values()[0], 0.0);
    }

    #[test]
    fn frozen_signal_observation_mean() {
        let m = FilteringModel::new(
            "frozen",
            1,
            Field::vector(1, |_, out| out[0] = 0.0),
            Field::matrix(1, 1, |_, out| out[0] = 0.0),
            |x| 0.5 + x[0],
            |_| 1.0,
        )
        .unwrap();
        let c = DerivedCoefficients::derive(&m).unwrap();
        let t = 0.4;
        let g = TimeGrid::new(t, 4).unwrap();
        let n = 100_000;
        let ends: Vec<f64> = (0..n)
            .map(|i| {
                let s = RngStream::new(3, StreamId::new(StreamTag::SignalNoise, 0, i));
                let o = RngStream::new(3, StreamId::new(StreamTag::ObservationNoise, 0, i));
                simulate_signal_and_observation(&c, &[0.5], &g, s, o)
                    .unwrap()
                    .1
                    .terminal()
            })
            .collect();
        let mean = ends.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0 * t).abs() < 3.0 * (t / n as f64).sqrt());

        let single = TimeGrid::new(t, 1).unwrap();
        let s = RngStream::new(3, StreamId(1));
        let (_, y) = simulate_signal_and_observation(&c, &[0.5], &single, s, s).unwrap();
        assert_eq!(y.values().len(), 2);
    }

    #[test]
    fn observation_path_invariants() {
        let g = TimeGrid::new(0.1, 50).unwrap();
        let y = sample_observation_p1(&g, RngStream::new(4, StreamId(4))).unwrap();
        assert_eq!(y.values()[0], 0.0);
        for k in 0..50 {
            assert_eq!(y.values()[k + 1], y.values()[k] + y.increments()[k]);
        }
    }

    #[test]
    fn ito_sum_examples() {
        let g = TimeGrid::new(0.6, 10).unwrap();
        let y = sample_observation_p1(&g, RngStream::new(8, StreamId(8))).unwrap();
        let ones = vec![1.0; 10];
        assert!((pathwise_ito_integral(&ones, &y).unwrap() - y.terminal()).abs() < 1e-14);
        assert_eq!(pathwise_ito_integral(&[0.0; 10], &y).unwrap(), 0.0);
        let half: Vec<f64> = (0..10).map(|k| if k < 5 { 1.0 } else { 0.0 }).collect();
        assert!((pathwise_ito_integral(&half, &y).unwrap() - y.values()[5]).abs() < 1e-14);
        assert!(pathwise_ito_integral(&[1.0; 9], &y).is_err());
    }

    #[test]
    fn reversed_integrand_indexing() {
        let c = ou();
        let g = TimeGrid::new(0.5, 8).unwrap();
        let p = simulate_xi(&[0.2], &c, &g, RngStream::new(1, StreamId(1))).unwrap();
        let m = FilteringModel::new(
            "id-sensor",
            1,
            Field::vector(1, |x, out| out[0] = x[0]),
            Field::matrix(1, 1, |_, out| out[0] = 1.0),
            |x| x[0],
            |_| 1.0,
        )
        .unwrap();
        let cid = DerivedCoefficients::derive(&m).unwrap();
        let r = reversed_sensor_values(&p, &cid);
        assert_eq!(r[0], p.state(8)[0]);
        assert_eq!(r[7], p.state(1)[0]);
    }
}
