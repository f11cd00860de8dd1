//! A quick oracle suite for the `selftest` command.

use serde::{Deserialize, Serialize};

use crate::bounds::{constant_C, double_integral_identity, kappa, TheoremParams};
use crate::error::Result;
use crate::model::ModelConstants;

use super::config::{ExperimentConfig, GridConfig, USolver};
use super::harness::sup_error_ball;
use super::identity::{remark_identity_test, IdentityConfig};
use super::lemma::lemma_sweep;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> SelfCheck {
    SelfCheck {
        name: name.into(),
        passed,
        detail,
    }
}

/// Midpoint rule for `(∫∫ |T − s − r| dr ds / T)^{1/2}` on an `n × n` grid.
fn quadrature(horizon: f64, n: usize) -> f64 {
    let h = horizon / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let s = (i as f64 + 0.5) * h;
        for j in 0..n {
            let r = (j as f64 + 0.5) * h;
            acc += (horizon - s - r).abs();
        }
    }
    (acc * h * h / horizon).sqrt()
}

fn small_config(model: &str, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        model: model.into(),
        horizons: vec![0.1],
        n_probes: 5,
        n_obs_paths: 50,
        richardson: false,
        grid: GridConfig {
            n_x: 201,
            n_y: 201,
            pde_steps: 64,
            zakai_steps: 64,
            ..GridConfig::default()
        },
        seed,
        ..ExperimentConfig::default()
    }
}

pub fn selftest(seed: u64) -> Result<Vec<SelfCheck>> {
    let mut out = Vec::new();

    let (k2, k4) = (kappa(2.0)?, kappa(4.0)?);
    out.push(check(
        "kappa",
        (k2 - 1.0).abs() < 1e-12 && (k4 - 3f64.powf(0.25)).abs() < 1e-12,
        format!("kappa(2) = {k2}, kappa(4) = {k4}"),
    ));

    let consts = ModelConstants {
        lipschitz_h: 1.0,
        growth_m: 1.0,
        h_inf: 1.0,
        u0_inf: 1.0,
        c_inf: 0.5,
        mu1: 1.0,
        mu2: 1.0,
        box_radius: 3.0,
        n_samples: 1000,
    };
    let p = TheoremParams::new(1.0, 2.0, 2.0, 0.1, 1.0, consts)?;
    let c = constant_C(&p)?;
    let expected = 2.0 / 3f64.sqrt() * 0.25f64.exp() * (1.0 + 0.1f64.sqrt()) * 4.4f64.sqrt();
    let zero = constant_C(&TheoremParams::new(
        1.0,
        2.0,
        2.0,
        0.1,
        1.0,
        ModelConstants { lipschitz_h: 0.0, ..consts },
    )?)?;
    out.push(check(
        "constant",
        (c - expected).abs() < 1e-12 && zero == 0.0,
        format!("C = {c} (expected {expected}), C(L = 0) = {zero}"),
    ));

    let mut worst: f64 = 0.0;
    for t in [0.1, 0.5, 1.0] {
        worst = worst.max((double_integral_identity(t)? - quadrature(t, 2000)).abs());
    }
    out.push(check("double-integral", worst < 1e-6, format!("max gap {worst:e}")));

    let sweep = lemma_sweep(2000, seed)?;
    out.push(check(
        "lemma-sweep",
        sweep.passed,
        format!(
            "{} checks, {} violations, max ratio {:.4}",
            sweep.n_checks, sweep.violations, sweep.max_ratio
        ),
    ));

    for model in ["zero-h", "const-h"] {
        let s = sup_error_ball(0.1, &small_config(model, seed))?;
        out.push(check(
            &format!("exact-{model}"),
            s.sup_error < 1e-6,
            format!("sup L1 error {:e}", s.sup_error),
        ));
    }

    let mut cfg = small_config("const-h", seed);
    cfg.u_solver = USolver::FkMc;
    cfg.fk_inner_paths = 1;
    let id = remark_identity_test(
        0.0,
        0.1,
        &cfg,
        &IdentityConfig {
            n_samples: 20_000,
            ..IdentityConfig::default()
        },
    )?;
    out.push(check(
        "identity-const-h",
        id.passed,
        format!("max |z| = {:.3} over {} bins", id.max_abs_z, id.bins.len()),
    ));
    Ok(out)
}
