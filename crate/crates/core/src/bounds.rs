//! Explicit constants and inequalities of the error estimate: `κ(q)`, the
//! constant `𝒞`, the exponential-martingale lemma and its exact `q = 2` left
//! side, and the moment-increment bound for the auxiliary diffusion.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::ModelConstants;

const HOLDER_TOL: f64 = 1e-12;

/// `L^q` norm of a standard Gaussian: `√2 (Γ((q+1)/2)/√π)^{1/q}`.
pub fn kappa(q: f64) -> Result<f64> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::Domain(format!("kappa needs q >= 1, got {q}")));
    }
    let ln_ratio = ln_gamma(0.5 * (q + 1.0)) - 0.5 * std::f64::consts::PI.ln();
    Ok(std::f64::consts::SQRT_2 * (ln_ratio / q).exp())
}

/// Parameters of the error estimate for one horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremParams {
    pub q: f64,
    pub q1: f64,
    pub q2: f64,
    pub horizon: f64,
    pub radius: f64,
    pub constants: ModelConstants,
}

impl TheoremParams {
    pub fn new(
        q: f64,
        q1: f64,
        q2: f64,
        horizon: f64,
        radius: f64,
        constants: ModelConstants,
    ) -> Result<Self> {
        let p = TheoremParams {
            q,
            q1,
            q2,
            horizon,
            radius,
            constants,
        };
        p.validate()?;
        Ok(p)
    }

    /// The symmetric split `q1 = q2 = 2q`.
    pub fn symmetric(q: f64, horizon: f64, radius: f64, constants: ModelConstants) -> Result<Self> {
        TheoremParams::new(q, 2.0 * q, 2.0 * q, horizon, radius, constants)
    }

    pub fn validate(&self) -> Result<()> {
        let TheoremParams { q, q1, q2, .. } = *self;
        if !(q >= 1.0 && q1 >= 1.0 && q2 >= 1.0) {
            return Err(Error::Holder { q, q1, q2 });
        }
        if (1.0 / q1 + 1.0 / q2 - 1.0 / q).abs() > HOLDER_TOL {
            return Err(Error::Holder { q, q1, q2 });
        }
        if !(self.horizon > 0.0 && self.horizon < 1.0) {
            return Err(Error::Domain(format!(
                "horizon must lie in (0, 1), got {}",
                self.horizon
            )));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::Domain(format!("ball radius must be positive, got {}", self.radius)));
        }
        let c = &self.constants;
        let all = [
            c.lipschitz_h,
            c.growth_m,
            c.h_inf,
            c.u0_inf,
            c.c_inf,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain(format!("model constants must be finite and nonnegative: {c:?}")));
        }
        Ok(())
    }
}

/// `𝒞` together with the factors it is the product of.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantBreakdown {
    /// `2/√3`
    pub prefactor: f64,
    /// `|u₀|∞`
    pub u0_inf: f64,
    /// `e^{T(|c|∞ + (q₁−1)/2 |h|∞² + √M + M/2)}`
    pub exponential: f64,
    /// `κ(q₂) + √T |h|∞`
    pub kappa_term: f64,
    /// `L`
    pub lipschitz: f64,
    /// `√(2(1+K²)(1+T))`
    pub ball: f64,
    pub value: f64,
}

pub fn constant_c_breakdown(p: &TheoremParams) -> Result<ConstantBreakdown> {
    p.validate()?;
    let t = p.horizon;
    let c = &p.constants;
    let m = c.growth_m;
    let prefactor = 2.0 / 3f64.sqrt();
    let exponential =
        (t * (c.c_inf + 0.5 * (p.q1 - 1.0) * c.h_inf * c.h_inf + m.sqrt() + 0.5 * m)).exp();
    let kappa_term = kappa(p.q2)? + t.sqrt() * c.h_inf;
    let ball = (2.0 * (1.0 + p.radius * p.radius) * (1.0 + t)).sqrt();
    let value = prefactor * c.u0_inf * exponential * kappa_term * c.lipschitz_h * ball;
    Ok(ConstantBreakdown {
        prefactor,
        u0_inf: c.u0_inf,
        exponential,
        kappa_term,
        lipschitz: c.lipschitz_h,
        ball,
        value,
    })
}

/// The constant `𝒞` of the error estimate `sup_{|x|≤K} ‖u − e^{Y²/2T}v‖_q ≤ 𝒞 T`.
#[allow(non_snake_case)]
pub fn constant_C(p: &TheoremParams) -> Result<f64> {
    Ok(constant_c_breakdown(p)?.value)
}

/// Minimizes `𝒞` over the Hölder split `q₁ ∈ (q, ∞)`, `q₂ = q q₁/(q₁ − q)`.
/// Returns the optimal parameters and the minimal constant.
pub fn optimize_split(p: &TheoremParams) -> Result<(TheoremParams, f64)> {
    p.validate()?;
    let q = p.q;
    let eval = |s: f64| -> Result<(TheoremParams, f64)> {
        // s = ln(q1 - q)
        let q1 = q + s.exp();
        let q2 = q * q1 / (q1 - q);
        let cand = TheoremParams { q1, q2, ..*p };
        Ok((cand, constant_C(&cand)?))
    };
    let (lo, hi) = ((1e-6f64).ln(), (1e6f64).ln());
    let n = 400;
    let mut best = (0, f64::INFINITY);
    for i in 0..=n {
        let s = lo + (hi - lo) * i as f64 / n as f64;
        let v = eval(s)?.1;
        if v < best.1 {
            best = (i, v);
        }
    }
    let step = (hi - lo) / n as f64;
    let centre = lo + step * best.0 as f64;
    let (mut a, mut b) = (centre - step, centre + step);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if eval(c)?.1 <= eval(d)?.1 {
            b = d;
        } else {
            a = c;
        }
    }
    let refined = eval(0.5 * (a + b))?;
    let grid_best = eval(centre)?;
    // Keep whichever is smaller; also never worse than the input split.
    let mut out = if refined.1 <= grid_best.1 { refined } else { grid_best };
    let base = constant_C(p)?;
    if base < out.1 {
        out = (*p, base);
    }
    Ok(out)
}

/// Right side of the exponential-martingale lemma:
/// `(e^{(q₁−1)T|f|∞²/2} + e^{(q₁−1)T|g|∞²/2}) (κ(q₂) + √T(|f|∞+|g|∞)/2) |f − g|₂`.
pub fn lemma_bound(
    f_sup: f64,
    g_sup: f64,
    f_minus_g_l2: f64,
    horizon: f64,
    q1: f64,
    q2: f64,
) -> Result<f64> {
    if f_sup < 0.0 || g_sup < 0.0 || f_minus_g_l2 < 0.0 || horizon < 0.0 {
        return Err(Error::Domain("lemma_bound needs nonnegative norms and horizon".into()));
    }
    let e = |s: f64| (0.5 * (q1 - 1.0) * horizon * s * s).exp();
    Ok((e(f_sup) + e(g_sup)) * (kappa(q2)? + 0.5 * horizon.sqrt() * (f_sup + g_sup)) * f_minus_g_l2)
}

/// A right-continuous step function on `[0, T]`: `values[k]` on
/// `[knots[k], knots[k+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::Length {
                what: "step function knots",
                expected: values.len() + 1,
                got: knots.len(),
            });
        }
        if knots[0] != 0.0 || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(
                "step function knots must start at 0 and increase strictly".into(),
            ));
        }
        Ok(StepFunction { knots, values })
    }

    /// Equal cells on `[0, T]`.
    pub fn uniform(horizon: f64, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        let knots = (0..=n)
            .map(|k| if k == n { horizon } else { horizon * k as f64 / n as f64 })
            .collect();
        StepFunction::new(knots, values)
    }

    pub fn horizon(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.knots.windows(2).map(|w| w[1] - w[0])
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `∫₀^T f g ds`; both functions must share their knots.
    pub fn inner(&self, other: &StepFunction) -> Result<f64> {
        if self.knots != other.knots {
            return Err(Error::Config("step functions live on different partitions".into()));
        }
        Ok(self
            .widths()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a * b)
            .sum())
    }

    pub fn l2_norm(&self) -> f64 {
        self.widths()
            .zip(&self.values)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn l2_distance(&self, other: &StepFunction) -> Result<f64> {
        if self.knots != other.knots {
            return Err(Error::Config("step functions live on different partitions".into()));
        }
        Ok(self
            .widths()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

/// Exact `L²(ℙ₁)` distance between `e^{∫f dY − |f|₂²/2}` and
/// `e^{∫g dY − |g|₂²/2}` for a Brownian `Y`:
/// `(e^{|f|₂²} + e^{|g|₂²} − 2e^{⟨f,g⟩})^{1/2}`.
pub fn lemma_lhs_exact_q2(f: &StepFunction, g: &StepFunction) -> Result<f64> {
    let fg = f.inner(g)?;
    // Differences computed directly so that nearby f, g do not cancel.
    let mut a_minus_c = 0.0;
    let mut b_minus_c = 0.0;
    for (w, (x, y)) in f.widths().zip(f.values.iter().zip(&g.values)) {
        a_minus_c += w * x * (x - y);
        b_minus_c += w * y * (y - x);
    }
    let s = a_minus_c.exp_m1() + b_minus_c.exp_m1();
    Ok((fg.exp() * s.max(0.0)).sqrt())
}

/// `2L²(1+|x|²)(1+T)e^{2(√M+M/2)T}|T−s−r|`, a bound on
/// `Ê|h(ξ̂_{T−s}) − h(ξ̂_r)|²`.
pub fn moment_increment_bound(
    x_norm: f64,
    lipschitz: f64,
    growth_m: f64,
    horizon: f64,
    s: f64,
    r: f64,
) -> Result<f64> {
    if !(0.0..=horizon).contains(&s) || !(0.0..=horizon).contains(&r) {
        return Err(Error::Domain(format!(
            "need 0 <= s, r <= T (s = {s}, r = {r}, T = {horizon})"
        )));
    }
    let growth = (2.0 * (growth_m.sqrt() + 0.5 * growth_m) * horizon).exp();
    Ok(2.0
        * lipschitz
        * lipschitz
        * (1.0 + x_norm * x_norm)
        * (1.0 + horizon)
        * growth
        * (horizon - s - r).abs())
}

/// `(∫₀^T (1/T)∫₀^T |T − s − r| dr ds)^{1/2} = T/√3`.
pub fn double_integral_identity(horizon: f64) -> Result<f64> {
    if !(horizon >= 0.0) {
        return Err(Error::Domain(format!("horizon must be nonnegative, got {horizon}")));
    }
    Ok(horizon / 3f64.sqrt())
}
