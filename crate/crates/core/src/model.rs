//! Filtering problem instances and the coefficients derived from them.
//!
//! A [`FilteringModel`] carries the signal drift `b`, diffusion `σ`, sensor
//! `h`, initial density `u₀` and observation offset `y₀`. From it we derive
//! the diffusion matrix `a = σσᵀ`, the adjoint drift `b*` and the zeroth-order
//! coefficient `c` of the adjoint generator
//!
//! ```text
//! ℒ*f = ½ Σ a_ij ∂²_ij f + Σ b*_i ∂_i f + c f,
//! b*_i = Σ_j ∂_j a_ij − b_i,
//! c    = ½ Σ_ij ∂²_ij a_ij − Σ_i ∂_i b_i,
//! ```
//!
//! plus the scalar constants (`L`, `M`, sup norms, ellipticity bounds) that
//! enter the error constant in [`crate::bounds`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type FieldFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

type Scratch = SmallVec<[f64; 16]>;

fn scratch(len: usize) -> Scratch {
    SmallVec::from_elem(0.0, len)
}

/// A vector- or matrix-valued coefficient with a declared output shape.
///
/// The callable writes `rows * cols` values (row-major) into the output slice.
#[derive(Clone)]
pub struct Field {
    rows: usize,
    cols: usize,
    f: FieldFn,
}

impl Field {
    pub fn vector(len: usize, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Field {
            rows: len,
            cols: 1,
            f: Arc::new(f),
        }
    }

    pub fn matrix(
        rows: usize,
        cols: usize,
        f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Field {
            rows,
            cols,
            f: Arc::new(f),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// Optional analytic derivatives. Anything left `None` falls back to central
/// finite differences with step `cbrt(ε)·max(1, |x|)`.
#[derive(Clone, Default)]
pub struct DerivativeHints {
    /// `(Σ_j ∂_j a_ij)_i`, length d.
    pub div_a: Option<Field>,
    /// `Σ_ij ∂²_ij a_ij`.
    pub div_div_a: Option<ScalarFn>,
    /// `Σ_i ∂_i b_i`.
    pub div_b: Option<ScalarFn>,
    /// `∇h`, length d.
    pub grad_h: Option<Field>,
}

#[derive(Clone)]
pub struct FilteringModel {
    name: String,
    dim: usize,
    drift: Field,
    diffusion: Field,
    sensor: ScalarFn,
    initial_density: ScalarFn,
    y0: f64,
    hints: DerivativeHints,
}

impl fmt::Debug for FilteringModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FilteringModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("y0", &self.y0)
            .finish_non_exhaustive()
    }
}

impl FilteringModel {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        drift: Field,
        diffusion: Field,
        sensor: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        initial_density: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("model dimension must be positive".into()));
        }
        if drift.shape() != (dim, 1) {
            return Err(Error::Dimension {
                what: "drift b",
                expected: dim,
                got: drift.rows * drift.cols,
            });
        }
        Ok(FilteringModel {
            name: name.into(),
            dim,
            drift,
            diffusion,
            sensor: Arc::new(sensor),
            initial_density: Arc::new(initial_density),
            y0: 0.0,
            hints: DerivativeHints::default(),
        })
    }

    pub fn with_y0(mut self, y0: f64) -> Self {
        self.y0 = y0;
        self
    }

    pub fn with_hints(mut self, hints: DerivativeHints) -> Result<Self> {
        if let Some(f) = &hints.div_a {
            if f.shape() != (self.dim, 1) {
                return Err(Error::Dimension {
                    what: "div_a hint",
                    expected: self.dim,
                    got: f.rows * f.cols,
                });
            }
        }
        if let Some(f) = &hints.grad_h {
            if f.shape() != (self.dim, 1) {
                return Err(Error::Dimension {
                    what: "grad_h hint",
                    expected: self.dim,
                    got: f.rows * f.cols,
                });
            }
        }
        self.hints = hints;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn hints(&self) -> &DerivativeHints {
        &self.hints
    }

    #[inline]
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        self.drift.eval(x, out)
    }

    #[inline]
    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        self.diffusion.eval(x, out)
    }

    #[inline]
    pub fn sensor(&self, x: &[f64]) -> f64 {
        (self.sensor)(x)
    }

    #[inline]
    pub fn initial_density(&self, x: &[f64]) -> f64 {
        (self.initial_density)(x)
    }

    /// Trapezoidal mass of `u₀` on `[-radius, radius]` (d = 1 only), after
    /// checking nonnegativity at every node.
    pub fn initial_mass_1d(&self, radius: f64, n: usize) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::Config("initial_mass_1d needs d = 1".into()));
        }
        let dx = 2.0 * radius / (n - 1) as f64;
        let mut mass = 0.0;
        for i in 0..n {
            let x = -radius + i as f64 * dx;
            let u = self.initial_density(&[x]);
            if !u.is_finite() || u < 0.0 {
                return Err(Error::NonFinite {
                    what: "nonnegative initial density",
                    x: vec![x],
                });
            }
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            mass += w * u * dx;
        }
        Ok(mass)
    }
}

#[inline]
pub(crate) fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// `a(x) = σ(x)σ(x)ᵀ`.
#[derive(Clone, Debug)]
pub struct DiffusionMatrix {
    model: FilteringModel,
}

impl DiffusionMatrix {
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        let d = self.model.dim;
        let mut sigma = scratch(d * d);
        self.model.diffusion(x, &mut sigma);
        for i in 0..d {
            for j in 0..=i {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += sigma[i * d + k] * sigma[j * d + k];
                }
                out[i * d + j] = acc;
                out[j * d + i] = acc;
            }
        }
    }

    fn entry(&self, x: &[f64], i: usize, j: usize) -> f64 {
        let d = self.model.dim;
        let mut a = scratch(d * d);
        self.eval(x, &mut a);
        a[i * d + j]
    }
}

pub fn derive_diffusion_matrix(model: &FilteringModel) -> Result<DiffusionMatrix> {
    let d = model.dim;
    let (rows, cols) = model.diffusion.shape();
    if rows != d {
        return Err(Error::Dimension {
            what: "diffusion σ rows",
            expected: d,
            got: rows,
        });
    }
    if cols != d {
        return Err(Error::Dimension {
            what: "diffusion σ columns",
            expected: d,
            got: cols,
        });
    }
    Ok(DiffusionMatrix {
        model: model.clone(),
    })
}

/// `b*_i(x) = Σ_j ∂_j a_ij(x) − b_i(x)`.
#[derive(Clone, Debug)]
pub struct AdjointDrift {
    a: DiffusionMatrix,
}

impl AdjointDrift {
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        let model = &self.a.model;
        let d = model.dim;
        match &model.hints.div_a {
            Some(div_a) => div_a.eval(x, out),
            None => divergence_of_a(&self.a, x, out),
        }
        let mut b = scratch(d);
        model.drift(x, &mut b);
        for i in 0..d {
            out[i] -= b[i];
        }
    }
}

fn divergence_of_a(a: &DiffusionMatrix, x: &[f64], out: &mut [f64]) {
    let d = a.model.dim;
    out[..d].iter_mut().for_each(|v| *v = 0.0);
    let mut xp: Scratch = x.iter().copied().collect();
    let mut plus = scratch(d * d);
    let mut minus = scratch(d * d);
    for j in 0..d {
        let h = fd_step(x[j]);
        xp[j] = x[j] + h;
        a.eval(&xp, &mut plus);
        xp[j] = x[j] - h;
        a.eval(&xp, &mut minus);
        xp[j] = x[j];
        for i in 0..d {
            out[i] += (plus[i * d + j] - minus[i * d + j]) / (2.0 * h);
        }
    }
}

pub fn derive_adjoint_drift(model: &FilteringModel, a: &DiffusionMatrix) -> AdjointDrift {
    debug_assert_eq!(model.dim, a.model.dim);
    AdjointDrift { a: a.clone() }
}

/// `c(x) = ½ Σ_ij ∂²_ij a_ij(x) − Σ_i ∂_i b_i(x)`.
#[derive(Clone, Debug)]
pub struct ZerothOrder {
    a: DiffusionMatrix,
}

impl ZerothOrder {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let model = &self.a.model;
        let dda = match &model.hints.div_div_a {
            Some(f) => f(x),
            None => double_divergence_of_a(&self.a, x),
        };
        let db = match &model.hints.div_b {
            Some(f) => f(x),
            None => divergence_of_b(model, x),
        };
        0.5 * dda - db
    }
}

fn double_divergence_of_a(a: &DiffusionMatrix, x: &[f64]) -> f64 {
    let d = a.model.dim;
    let mut xp: Scratch = x.iter().copied().collect();
    let mut total = 0.0;
    for i in 0..d {
        let hi = fd_step(x[i]);
        for j in 0..d {
            if i == j {
                let centre = a.entry(x, i, i);
                xp[i] = x[i] + hi;
                let plus = a.entry(&xp, i, i);
                xp[i] = x[i] - hi;
                let minus = a.entry(&xp, i, i);
                xp[i] = x[i];
                total += (plus - 2.0 * centre + minus) / (hi * hi);
            } else {
                let hj = fd_step(x[j]);
                let mut corner = |si: f64, sj: f64| {
                    xp[i] = x[i] + si * hi;
                    xp[j] = x[j] + sj * hj;
                    let v = a.entry(&xp, i, j);
                    xp[i] = x[i];
                    xp[j] = x[j];
                    v
                };
                let pp = corner(1.0, 1.0);
                let pm = corner(1.0, -1.0);
                let mp = corner(-1.0, 1.0);
                let mm = corner(-1.0, -1.0);
                total += (pp - pm - mp + mm) / (4.0 * hi * hj);
            }
        }
    }
    total
}

fn divergence_of_b(model: &FilteringModel, x: &[f64]) -> f64 {
    let d = model.dim;
    let mut xp: Scratch = x.iter().copied().collect();
    let mut plus = scratch(d);
    let mut minus = scratch(d);
    let mut total = 0.0;
    for i in 0..d {
        let h = fd_step(x[i]);
        xp[i] = x[i] + h;
        model.drift(&xp, &mut plus);
        xp[i] = x[i] - h;
        model.drift(&xp, &mut minus);
        xp[i] = x[i];
        total += (plus[i] - minus[i]) / (2.0 * h);
    }
    total
}

pub fn derive_zeroth_order(model: &FilteringModel, a: &DiffusionMatrix) -> ZerothOrder {
    debug_assert_eq!(model.dim, a.model.dim);
    ZerothOrder { a: a.clone() }
}

/// Everything the solvers need from a model: `a`, `b*`, `c` and pass-through
/// access to `σ`, `h`, `u₀`.
#[derive(Clone, Debug)]
pub struct DerivedCoefficients {
    a: DiffusionMatrix,
    b_star: AdjointDrift,
    c: ZerothOrder,
}

impl DerivedCoefficients {
    pub fn derive(model: &FilteringModel) -> Result<Self> {
        let a = derive_diffusion_matrix(model)?;
        let b_star = derive_adjoint_drift(model, &a);
        let c = derive_zeroth_order(model, &a);
        Ok(DerivedCoefficients { a, b_star, c })
    }

    pub fn model(&self) -> &FilteringModel {
        &self.a.model
    }

    pub fn dim(&self) -> usize {
        self.a.model.dim
    }

    #[inline]
    pub fn a(&self, x: &[f64], out: &mut [f64]) {
        self.a.eval(x, out)
    }

    #[inline]
    pub fn b_star(&self, x: &[f64], out: &mut [f64]) {
        self.b_star.eval(x, out)
    }

    #[inline]
    pub fn c(&self, x: &[f64]) -> f64 {
        self.c.eval(x)
    }

    #[inline]
    pub fn sigma(&self, x: &[f64], out: &mut [f64]) {
        self.a.model.diffusion(x, out)
    }

    #[inline]
    pub fn h(&self, x: &[f64]) -> f64 {
        self.a.model.sensor(x)
    }

    #[inline]
    pub fn u0(&self, x: &[f64]) -> f64 {
        self.a.model.initial_density(x)
    }

    pub fn grad_h(&self, x: &[f64], out: &mut [f64]) {
        let model = &self.a.model;
        if let Some(g) = &model.hints.grad_h {
            g.eval(x, out);
            return;
        }
        let mut xp: Scratch = x.iter().copied().collect();
        for i in 0..model.dim {
            let h = fd_step(x[i]);
            xp[i] = x[i] + h;
            let plus = model.sensor(&xp);
            xp[i] = x[i] - h;
            let minus = model.sensor(&xp);
            xp[i] = x[i];
            out[i] = (plus - minus) / (2.0 * h);
        }
    }
}

/// Scalar constants of a model, estimated by sampling over a box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    /// Lipschitz constant `L` of `h`.
    pub lipschitz_h: f64,
    /// Growth constant `M` with `max{|a|², |b*|} ≤ M(1 + |x|²)`.
    pub growth_m: f64,
    pub h_inf: f64,
    pub u0_inf: f64,
    pub c_inf: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub box_radius: f64,
    pub n_samples: usize,
}

/// Analytic values that replace sampled estimates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantOverrides {
    pub lipschitz_h: Option<f64>,
    pub growth_m: Option<f64>,
    pub h_inf: Option<f64>,
    pub u0_inf: Option<f64>,
    pub c_inf: Option<f64>,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
}

impl ModelConstants {
    pub fn with_overrides(mut self, o: &ConstantOverrides) -> Self {
        let pick = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        pick(&mut self.lipschitz_h, o.lipschitz_h);
        pick(&mut self.growth_m, o.growth_m);
        pick(&mut self.h_inf, o.h_inf);
        pick(&mut self.u0_inf, o.u0_inf);
        pick(&mut self.c_inf, o.c_inf);
        pick(&mut self.mu1, o.mu1);
        pick(&mut self.mu2, o.mu2);
        self
    }
}

const HALTON_PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
const LEVEL_MIN: i32 = -20;
const LEVEL_MAX: i32 = 20;

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut acc = 0.0;
    let mut f = inv;
    while index > 0 {
        acc += (index % base) as f64 * f;
        index /= base;
        f *= inv;
    }
    acc
}

/// Points at which constants are sampled for a box of the given radius.
///
/// The candidate set is fixed and independent of the radius: the origin plus
/// `n_per_level` Halton points in `[-ρ, ρ]^d` for each level `ρ = 2^{k/2}`,
/// `k ∈ [-20, 20]`. A box keeps exactly the candidates it contains, so the
/// sample sets are nested in the radius and every supremum estimate is
/// monotone in it.
pub fn estimation_points(dim: usize, box_radius: f64, n_per_level: usize) -> Result<Vec<Vec<f64>>> {
    if dim > HALTON_PRIMES.len() {
        return Err(Error::Config(format!(
            "constant estimation supports d <= {}",
            HALTON_PRIMES.len()
        )));
    }
    let mut pts = vec![vec![0.0; dim]];
    for level in LEVEL_MIN..=LEVEL_MAX {
        let rho = 2f64.powf(level as f64 / 2.0);
        for i in 0..n_per_level {
            let p: Vec<f64> = (0..dim)
                .map(|j| rho * (2.0 * radical_inverse(i as u64 + 1, HALTON_PRIMES[j]) - 1.0))
                .collect();
            if p.iter().all(|v| v.abs() <= box_radius) {
                pts.push(p);
            }
        }
    }
    Ok(pts)
}

#[derive(Clone, Copy)]
struct PointConstants {
    grad_h: f64,
    growth: f64,
    h: f64,
    u0: f64,
    c: f64,
    mu1: f64,
    mu2: f64,
}

fn symmetric_eigen_range(a: &[f64], d: usize) -> (f64, f64) {
    if d == 1 {
        return (a[0], a[0]);
    }
    let m = nalgebra::DMatrix::from_row_slice(d, d, a);
    let ev = m.symmetric_eigenvalues();
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn point_constants(coeffs: &DerivedCoefficients, x: &[f64]) -> Result<PointConstants> {
    let d = coeffs.dim();
    let mut buf = scratch(d * d);
    let mut vec = scratch(d);
    let check = |what: &'static str, v: f64| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { what, x: x.to_vec() })
        }
    };

    coeffs.grad_h(x, &mut vec);
    let grad_h = check("∇h", vec.iter().map(|g| g * g).sum::<f64>().sqrt())?;

    coeffs.a(x, &mut buf);
    let a_frob2 = check("a", buf.iter().map(|v| v * v).sum::<f64>())?;
    let (mu1, mu2) = symmetric_eigen_range(&buf, d);

    coeffs.b_star(x, &mut vec);
    let b_norm = check("b*", vec.iter().map(|v| v * v).sum::<f64>().sqrt())?;
    let x2: f64 = x.iter().map(|v| v * v).sum();

    Ok(PointConstants {
        grad_h,
        growth: a_frob2.max(b_norm) / (1.0 + x2),
        h: check("h", coeffs.h(x))?.abs(),
        u0: check("u₀", coeffs.u0(x))?.abs(),
        c: check("c", coeffs.c(x))?.abs(),
        mu1,
        mu2,
    })
}

/// Sample `L`, `M`, the sup norms and the ellipticity bounds over the box
/// `[-box_radius, box_radius]^d`. `n_samples` is the number of candidate
/// points per scale level (see [`estimation_points`]).
pub fn estimate_constants(
    coeffs: &DerivedCoefficients,
    box_radius: f64,
    n_samples: usize,
) -> Result<ModelConstants> {
    if !(box_radius > 0.0) || !box_radius.is_finite() {
        return Err(Error::Config(format!("box radius must be positive, got {box_radius}")));
    }
    if n_samples < 1000 {
        return Err(Error::Config(format!(
            "constant estimation needs at least 1000 samples, got {n_samples}"
        )));
    }
    let pts = estimation_points(coeffs.dim(), box_radius, n_samples)?;
    let per_point: Vec<PointConstants> = pts
        .par_iter()
        .map(|x| point_constants(coeffs, x))
        .collect::<Result<_>>()?;

    let mut out = ModelConstants {
        lipschitz_h: 0.0,
        growth_m: 0.0,
        h_inf: 0.0,
        u0_inf: 0.0,
        c_inf: 0.0,
        mu1: f64::INFINITY,
        mu2: 0.0,
        box_radius,
        n_samples,
    };
    for p in &per_point {
        out.lipschitz_h = out.lipschitz_h.max(p.grad_h);
        out.growth_m = out.growth_m.max(p.growth);
        out.h_inf = out.h_inf.max(p.h);
        out.u0_inf = out.u0_inf.max(p.u0);
        out.c_inf = out.c_inf.max(p.c);
        out.mu1 = out.mu1.min(p.mu1);
        out.mu2 = out.mu2.max(p.mu2);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Built-in models
// ---------------------------------------------------------------------------

pub fn gaussian_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    (-(z * z) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// A named model constructor with its tunable parameters and defaults.
pub struct ModelSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub params: &'static [(&'static str, f64)],
    /// Whether the model meets the boundedness/Lipschitz assumptions the
    /// error bound needs.
    pub satisfies_assumptions: bool,
    build: fn(&BTreeMap<String, f64>) -> Result<FilteringModel>,
}

impl ModelSpec {
    pub fn build(&self, overrides: &BTreeMap<String, f64>) -> Result<FilteringModel> {
        let mut params: BTreeMap<String, f64> =
            self.params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        for (k, v) in overrides {
            match params.get_mut(k) {
                Some(slot) => *slot = *v,
                None => {
                    return Err(Error::Config(format!(
                        "model `{}` has no parameter `{k}` (known: {})",
                        self.name,
                        self.params.iter().map(|p| p.0).collect::<Vec<_>>().join(", ")
                    )))
                }
            }
        }
        (self.build)(&params)
    }

    pub fn defaults(&self) -> BTreeMap<String, f64> {
        self.params.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }
}

const OU_PARAMS: &[(&str, f64)] = &[
    ("theta", 1.0),
    ("sigma", 1.0),
    ("gain", 1.0),
    ("u0_mean", 0.0),
    ("u0_var", 0.25),
    ("y0", 0.0),
];

const CONST_PARAMS: &[(&str, f64)] = &[
    ("theta", 1.0),
    ("sigma", 1.0),
    ("h0", 0.5),
    ("u0_mean", 0.0),
    ("u0_var", 0.25),
    ("y0", 0.0),
];

const ZERO_PARAMS: &[(&str, f64)] = &[
    ("theta", 1.0),
    ("sigma", 1.0),
    ("u0_mean", 0.0),
    ("u0_var", 0.25),
    ("y0", 0.0),
];

static BUILTINS: [ModelSpec; 4] = [
    ModelSpec {
        name: "ou-tanh",
        description: "d=1 Ornstein-Uhlenbeck signal b(x)=-θx, σ constant, sensor h(x)=gain·tanh(x), Gaussian u₀",
        params: OU_PARAMS,
        satisfies_assumptions: true,
        build: build_ou_tanh,
    },
    ModelSpec {
        name: "const-h",
        description: "d=1 Ornstein-Uhlenbeck signal with constant sensor h ≡ h0",
        params: CONST_PARAMS,
        satisfies_assumptions: true,
        build: build_const_h,
    },
    ModelSpec {
        name: "zero-h",
        description: "d=1 Ornstein-Uhlenbeck signal with an uninformative sensor h ≡ 0",
        params: ZERO_PARAMS,
        satisfies_assumptions: true,
        build: build_zero_h,
    },
    ModelSpec {
        name: "kalman",
        description: "d=1 linear-Gaussian model h(x)=gain·x (unbounded sensor: validation only, outside the error bound's assumptions)",
        params: OU_PARAMS,
        satisfies_assumptions: false,
        build: build_kalman,
    },
];

pub fn builtin_models() -> &'static [ModelSpec] {
    &BUILTINS
}

pub fn model_spec(name: &str) -> Result<&'static ModelSpec> {
    BUILTINS.iter().find(|m| m.name == name).ok_or_else(|| {
        Error::Config(format!(
            "unknown model `{name}` (available: {})",
            BUILTINS.iter().map(|m| m.name).collect::<Vec<_>>().join(", ")
        ))
    })
}

pub fn build_model(name: &str, overrides: &BTreeMap<String, f64>) -> Result<FilteringModel> {
    model_spec(name)?.build(overrides)
}

fn ou_signal(
    name: &str,
    p: &BTreeMap<String, f64>,
    sensor: impl Fn(f64) -> f64 + Send + Sync + 'static,
    sensor_slope: impl Fn(f64) -> f64 + Send + Sync + 'static,
) -> Result<FilteringModel> {
    let theta = p["theta"];
    let sigma = p["sigma"];
    let mean = p["u0_mean"];
    let var = p["u0_var"];
    if !(sigma > 0.0) || !(var > 0.0) {
        return Err(Error::Config(format!(
            "model `{name}` needs sigma > 0 and u0_var > 0"
        )));
    }
    let hints = DerivativeHints {
        div_a: Some(Field::vector(1, |_, out| out[0] = 0.0)),
        div_div_a: Some(Arc::new(|_| 0.0)),
        div_b: Some(Arc::new(move |_| -theta)),
        grad_h: Some(Field::vector(1, move |x, out| out[0] = sensor_slope(x[0]))),
    };
    FilteringModel::new(
        name,
        1,
        Field::vector(1, move |x, out| out[0] = -theta * x[0]),
        Field::matrix(1, 1, move |_, out| out[0] = sigma),
        move |x| sensor(x[0]),
        move |x| gaussian_pdf(x[0], mean, var),
    )?
    .with_y0(p["y0"])
    .with_hints(hints)
}

fn build_ou_tanh(p: &BTreeMap<String, f64>) -> Result<FilteringModel> {
    let gain = p["gain"];
    ou_signal(
        "ou-tanh",
        p,
        move |x| gain * x.tanh(),
        move |x| {
            let s = 1.0 / x.cosh();
            gain * s * s
        },
    )
}

fn build_const_h(p: &BTreeMap<String, f64>) -> Result<FilteringModel> {
    let h0 = p["h0"];
    ou_signal("const-h", p, move |_| h0, |_| 0.0)
}

fn build_zero_h(p: &BTreeMap<String, f64>) -> Result<FilteringModel> {
    ou_signal("zero-h", p, |_| 0.0, |_| 0.0)
}

fn build_kalman(p: &BTreeMap<String, f64>) -> Result<FilteringModel> {
    let gain = p["gain"];
    ou_signal("kalman", p, move |x| gain * x, move |_| gain)
}
