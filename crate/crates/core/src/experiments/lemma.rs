//! Checks of the exponential-martingale lemma on random step functions.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{lemma_bound, lemma_lhs_exact_q2, StepFunction};
use crate::error::{Error, Result};
use crate::paths::{StreamFamily, StreamTag};
use crate::stats::lq_norm;

/// `q₁` values tried for `q = 2`; `q₂ = 2q₁/(q₁ − 2)`.
pub const SWEEP_Q1: [f64; 9] = [2.05, 2.25, 2.5, 3.0, 4.0, 6.0, 10.0, 20.0, 100.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSweepReport {
    pub n_pairs: usize,
    pub n_checks: usize,
    pub violations: usize,
    /// Largest `lhs / bound` seen.
    pub max_ratio: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaMcCase {
    pub q: f64,
    pub pair: usize,
    pub lhs: f64,
    pub std_error: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaMcReport {
    pub n_paths: usize,
    pub cases: Vec<LemmaMcCase>,
    pub passed: bool,
}

/// A random pair on a shared random partition of `[0, T]`, `T ≤ 1`, with
/// sup norms at most 2. Every fourth pair is a small perturbation.
fn random_pair(rng: &mut ChaCha8Rng) -> Result<(StepFunction, StepFunction)> {
    let n = rng.random_range(1..=16usize);
    let horizon = rng.random_range(0.01..=1.0);
    let mut cuts: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.0..horizon)).collect();
    cuts.sort_by(f64::total_cmp);
    let mut knots = vec![0.0];
    for c in cuts {
        if c > *knots.last().unwrap() + 1e-9 && c < horizon - 1e-9 {
            knots.push(c);
        }
    }
    knots.push(horizon);
    let cells = knots.len() - 1;
    let f: Vec<f64> = (0..cells).map(|_| rng.random_range(-2.0..=2.0)).collect();
    let g: Vec<f64> = if rng.random_range(0..4) == 0 {
        f.iter()
            .map(|v| (v + rng.random_range(-0.01..=0.01f64)).clamp(-2.0, 2.0))
            .collect()
    } else {
        (0..cells).map(|_| rng.random_range(-2.0..=2.0)).collect()
    };
    Ok((StepFunction::new(knots.clone(), f)?, StepFunction::new(knots, g)?))
}

/// `n_pairs` random pairs against every split in [`SWEEP_Q1`] and the
/// symmetric one, with the exact `q = 2` left side.
pub fn lemma_sweep(n_pairs: usize, seed: u64) -> Result<LemmaSweepReport> {
    let family = StreamFamily::new(seed, StreamTag::Lemma, 0);
    let per_pair: Vec<(usize, usize, f64)> = (0..n_pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = family.stream(i).rng();
            let (f, g) = random_pair(&mut rng)?;
            let lhs = lemma_lhs_exact_q2(&f, &g)?;
            let l2 = f.l2_distance(&g)?;
            let mut checks = 0;
            let mut bad = 0;
            let mut worst: f64 = 0.0;
            for q1 in SWEEP_Q1.iter().copied().chain([4.0]) {
                let q2 = 2.0 * q1 / (q1 - 2.0);
                let b = lemma_bound(f.sup_norm(), g.sup_norm(), l2, f.horizon(), q1, q2)?;
                checks += 1;
                if lhs > b {
                    bad += 1;
                }
                if b > 0.0 {
                    worst = worst.max(lhs / b);
                }
            }
            Ok((checks, bad, worst))
        })
        .collect::<Result<_>>()?;
    let n_checks = per_pair.iter().map(|p| p.0).sum();
    let violations = per_pair.iter().map(|p| p.1).sum();
    let max_ratio = per_pair.iter().map(|p| p.2).fold(0.0, f64::max);
    Ok(LemmaSweepReport {
        n_pairs,
        n_checks,
        violations,
        max_ratio,
        passed: violations == 0,
    })
}

/// Samples `e^{∫f dY − |f|₂²/2} − e^{∫g dY − |g|₂²/2}` over Brownian paths.
pub fn martingale_differences(
    f: &StepFunction,
    g: &StepFunction,
    n_paths: usize,
    family: StreamFamily,
) -> Result<Vec<f64>> {
    if f.knots() != g.knots() {
        return Err(Error::Config("step functions live on different partitions".into()));
    }
    let widths: Vec<f64> = f.widths().collect();
    let (nf, ng) = (f.l2_norm(), g.l2_norm());
    Ok((0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = family.stream(i).rng();
            let (mut sf, mut sg) = (0.0, 0.0);
            for (k, w) in widths.iter().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                let dy = w.sqrt() * z;
                sf += f.values()[k] * dy;
                sg += g.values()[k] * dy;
            }
            (sf - 0.5 * nf * nf).exp() - (sg - 0.5 * ng * ng).exp()
        })
        .collect())
}

/// Monte Carlo left side for `q ∈ qs` on `n_pairs` random pairs, against the
/// bound with the symmetric split `q₁ = q₂ = 2q`.
pub fn lemma_mc_check(qs: &[f64], n_pairs: usize, n_paths: usize, seed: u64) -> Result<LemmaMcReport> {
    let pairs = StreamFamily::new(seed, StreamTag::Lemma, 1);
    let mut cases = Vec::new();
    for pair in 0..n_pairs {
        let (f, g) = random_pair(&mut pairs.stream(pair).rng())?;
        let d = martingale_differences(&f, &g, n_paths, StreamFamily::new(seed, StreamTag::Lemma, 2 + pair as u32))?;
        let l2 = f.l2_distance(&g)?;
        for &q in qs {
            if !(q >= 1.0) {
                return Err(Error::Config(format!("q must be >= 1, got {q}")));
            }
            let est = lq_norm(&d, q);
            let bound = lemma_bound(f.sup_norm(), g.sup_norm(), l2, f.horizon(), 2.0 * q, 2.0 * q)?;
            cases.push(LemmaMcCase {
                q,
                pair,
                lhs: est.norm,
                std_error: est.std_error,
                bound,
                passed: est.norm <= bound + 3.0 * est.std_error,
            });
        }
    }
    Ok(LemmaMcReport {
        n_paths,
        passed: cases.iter().all(|c| c.passed),
        cases,
    })
}
