//! Fixed-order reductions and small statistics helpers.
//!
//! Every reduction here walks its input in index order so that results are
//! bit-reproducible no matter how the samples were produced.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

const PAIRWISE_BLOCK: usize = 32;

/// Pairwise (cascade) summation with a fixed split pattern.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

pub fn mean_estimate(values: &[f64]) -> MeanEstimate {
    let n = values.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            std_error: f64::NAN,
            n,
        };
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return MeanEstimate {
            mean,
            std_error: 0.0,
            n,
        };
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    MeanEstimate {
        mean,
        std_error: (var / n as f64).sqrt(),
        n,
    }
}

/// Estimate of an `L^q` norm `E[|Z|^q]^{1/q}` from samples of `Z`, with a
/// delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqEstimate {
    pub norm: f64,
    pub std_error: f64,
}

pub fn lq_norm(samples: &[f64], q: f64) -> LqEstimate {
    let powered: Vec<f64> = samples.iter().map(|d| d.abs().powf(q)).collect();
    let m = mean_estimate(&powered);
    let norm = m.mean.powf(1.0 / q);
    let std_error = if m.mean > 0.0 {
        m.mean.powf(1.0 / q - 1.0) * m.std_error / q
    } else {
        0.0
    };
    LqEstimate { norm, std_error }
}

/// Ordinary least squares fit of `ln(error) = intercept + slope ln(T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% confidence interval for the slope (Student t, n - 2 dof).
    pub slope_ci: (f64, f64),
    pub r_squared: f64,
}

pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(Error::Length {
            what: "fit ordinates",
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::Config(format!(
            "slope fit needs at least 3 points, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain(
            "log-log fit requires strictly positive finite data".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::Domain("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut sse = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        let r = y - intercept - slope * x;
        sse += r * r;
    }
    let dof = n - 2.0;
    let slope_se = if dof > 0.0 { (sse / dof / sxx).sqrt() } else { 0.0 };
    let t = StudentsT::new(0.0, 1.0, dof.max(1.0))
        .map_err(|e| Error::Domain(e.to_string()))?
        .inverse_cdf(0.975);
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(SlopeFit {
        slope,
        intercept,
        slope_ci: (slope - t * slope_se, slope + t * slope_se),
        r_squared,
    })
}
