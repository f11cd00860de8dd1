//! Convergence study over a list of horizons: sup errors, bound checks and a
//! log-log rate fit.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConstants;
use crate::stats::{fit_loglog, SlopeFit};

use super::config::{ExperimentConfig, USolver};
use super::harness::{run_horizon, ErrorRecord, HorizonSummary, Setup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub threads: usize,
    pub elapsed_seconds: f64,
    /// Horizons finished before the study ended.
    pub completed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub model: String,
    pub q: f64,
    pub q1: f64,
    pub q2: f64,
    #[serde(rename = "K")]
    pub radius: f64,
    pub seed: u64,
    pub u_solver: USolver,
    pub n_obs_paths: usize,
    pub probes: Vec<f64>,
    pub constants: Option<ModelConstants>,
    pub horizons: Vec<HorizonSummary>,
    /// Fit of `ln(sup error)` against `ln T`; absent with fewer than three
    /// horizons or when some sup error is exactly zero.
    pub fit: Option<SlopeFit>,
    pub all_bounds_satisfied: bool,
    pub metadata: RunMetadata,
}

impl ConvergenceReport {
    /// A report with no horizons yet.
    pub fn empty(config: &ExperimentConfig) -> Self {
        let (q1, q2) = config.holder_split().unwrap_or((2.0 * config.q, 2.0 * config.q));
        ConvergenceReport {
            model: config.model.clone(),
            q: config.q,
            q1,
            q2,
            radius: config.radius,
            seed: config.seed,
            u_solver: config.u_solver,
            n_obs_paths: config.n_obs_paths,
            probes: config.probes(),
            constants: None,
            horizons: Vec::new(),
            fit: None,
            all_bounds_satisfied: true,
            metadata: RunMetadata {
                version: env!("CARGO_PKG_VERSION").to_string(),
                threads: rayon::current_num_threads(),
                elapsed_seconds: 0.0,
                completed: 0,
            },
        }
    }

    pub fn records(&self) -> impl Iterator<Item = &ErrorRecord> {
        self.horizons.iter().flat_map(|h| h.records.iter())
    }

    /// Recomputes the fit and the summary flag from the per-horizon data.
    pub fn refresh(&mut self) {
        let ts: Vec<f64> = self.horizons.iter().map(|h| h.horizon).collect();
        let es: Vec<f64> = self.horizons.iter().map(|h| h.sup_error).collect();
        self.fit = fit_loglog(&ts, &es).ok().filter(|f| f.slope.is_finite());
        self.all_bounds_satisfied = self.horizons.iter().all(|h| h.satisfied);
        self.metadata.completed = self.horizons.len();
    }
}

/// Runs every configured horizon in order. A failure aborts the study and
/// returns [`Error::Study`] carrying the horizons completed so far.
pub fn convergence_study(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    study_with(config, run_horizon)
}

fn study_with(
    config: &ExperimentConfig,
    mut run: impl FnMut(&Setup, f64, &[f64]) -> Result<HorizonSummary>,
) -> Result<ConvergenceReport> {
    if config.horizons.len() < 3 {
        return Err(Error::Config(format!(
            "a convergence study needs at least 3 horizons, got {}",
            config.horizons.len()
        )));
    }
    let start = Instant::now();
    let mut report = ConvergenceReport::empty(config);
    let setup = Setup::new(config)?;
    report.constants = Some(setup.constants);
    report.q1 = setup.q1;
    report.q2 = setup.q2;
    let probes = config.probes();
    for &t in &config.horizons {
        match run(&setup, t, &probes) {
            Ok(summary) => report.horizons.push(summary),
            Err(e) => {
                report.refresh();
                report.metadata.elapsed_seconds = start.elapsed().as_secs_f64();
                return Err(Error::Study {
                    completed: report.horizons.len(),
                    partial: Box::new(report),
                    source: Box::new(e),
                });
            }
        }
    }
    report.refresh();
    report.metadata.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::ConstantBreakdown;
    use crate::experiments::harness::SolverDiagnostics;

    pub(crate) fn synthetic(config: &ExperimentConfig, errors: &[(f64, f64)]) -> ConvergenceReport {
        let mut r = ConvergenceReport::empty(config);
        let constant = ConstantBreakdown {
            prefactor: 1.0,
            u0_inf: 1.0,
            exponential: 1.0,
            kappa_term: 1.0,
            lipschitz: 1.0,
            ball: 1.0,
            value: 1.0,
        };
        for &(t, e) in errors {
            let rec = ErrorRecord {
                model: config.model.clone(),
                horizon: t,
                x: 0.0,
                q: config.q,
                lq_error: e,
                mc_std_error: 0.0,
                n_obs_paths: config.n_obs_paths,
                bound: t,
                discretization: None,
                solver: config.u_solver,
                seed: config.seed,
                diagnostics: SolverDiagnostics {
                    pde: Default::default(),
                    u_fallbacks: 0,
                    u_boundary_relative: 0.0,
                    y_span: 1.0,
                    y_widened: false,
                },
            };
            r.horizons.push(HorizonSummary {
                horizon: t,
                records: vec![rec],
                sup_error: e,
                sup_x: 0.0,
                sup_std_error: 0.0,
                discretization: 0.0,
                constant,
                bound: t,
                budget: 0.0,
                satisfied: e <= t,
                elapsed_seconds: 0.0,
            });
        }
        r.refresh();
        r
    }

    #[test]
    fn exact_power_laws_give_exact_slopes() {
        let cfg = ExperimentConfig::default();
        let lin = synthetic(&cfg, &[(0.4, 0.12), (0.2, 0.06), (0.1, 0.03), (0.05, 0.015)]);
        assert!((lin.fit.unwrap().slope - 1.0).abs() < 1e-9);
        let ts = [0.4, 0.2, 0.1, 0.05];
        let root: Vec<(f64, f64)> = ts.iter().map(|&t| (t, 0.7 * f64::sqrt(t))).collect();
        assert!((synthetic(&cfg, &root).fit.unwrap().slope - 0.5).abs() < 1e-9);
    }

    #[test]
    fn flags_follow_the_records() {
        let cfg = ExperimentConfig::default();
        let r = synthetic(&cfg, &[(0.4, 0.1), (0.2, 0.3), (0.1, 0.05)]);
        assert!(!r.all_bounds_satisfied);
        assert_eq!(r.horizons.iter().filter(|h| h.satisfied).count(), 2);
        let zero = synthetic(&cfg, &[(0.4, 0.0), (0.2, 0.0), (0.1, 0.0)]);
        assert!(zero.fit.is_none());
        assert!(zero.all_bounds_satisfied);
    }

    #[test]
    fn too_few_horizons_are_rejected() {
        let cfg = ExperimentConfig {
            horizons: vec![0.2, 0.1],
            ..ExperimentConfig::default()
        };
        assert!(matches!(convergence_study(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn failures_carry_the_partial_report() {
        let cfg = ExperimentConfig {
            model: "zero-h".into(),
            horizons: vec![0.2, 0.1, 0.05],
            n_probes: 3,
            n_obs_paths: 4,
            richardson: false,
            grid: crate::experiments::GridConfig {
                n_x: 41,
                n_y: 41,
                pde_steps: 8,
                zakai_steps: 8,
                ..Default::default()
            },
            ..ExperimentConfig::default()
        };
        let r = convergence_study(&cfg).unwrap();
        assert_eq!(r.horizons.len(), 3);
        assert!(r.all_bounds_satisfied);

        let failing = |s: &Setup, t: f64, p: &[f64]| {
            if t < 0.06 {
                Err(Error::Diverged { step: 7 })
            } else {
                run_horizon(s, t, p)
            }
        };
        match study_with(&cfg, failing) {
            Err(Error::Study { completed, partial, source }) => {
                assert_eq!(completed, 2);
                for (a, b) in partial.horizons.iter().zip(&r.horizons) {
                    assert_eq!(a.records, b.records);
                }
                assert_eq!(partial.metadata.completed, 2);
                assert!(matches!(*source, Error::Diverged { step: 7 }));
            }
            other => panic!("expected a study error, got {other:?}"),
        }
    }
}
