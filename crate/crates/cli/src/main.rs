use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use zakai_core::bounds::{constant_c_breakdown, optimize_split};
use zakai_core::experiments::{
    convergence_study, emit_reports, kalman_validation, lemma_mc_check, lemma_sweep, oracle_triangle,
    remark_identity_test, selftest, ConvergenceReport, ExperimentConfig, IdentityConfig, KalmanConfig,
    OracleConfig, Setup, USolver,
};
use zakai_core::Error;

/// Small-time Kolmogorov approximation of the Zakai equation: error
/// measurements, constants and oracle checks.
#[derive(Debug, Parser)]
#[command(name = "zakai", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment configuration; unknown keys are rejected.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory for report files.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Built-in model: ou-tanh, const-h, zero-h or kalman.
    #[arg(long, global = true, value_name = "NAME")]
    model: Option<String>,
    /// Comma-separated horizons, e.g. 0.4,0.2,0.1.
    #[arg(long = "T", global = true, value_name = "LIST", value_delimiter = ',')]
    horizons: Option<Vec<f64>>,
    /// Moment order q of the error norm.
    #[arg(long, global = true, value_name = "N")]
    q: Option<f64>,
    /// Number of paths or samples (observation paths for `run`, samples for
    /// `identity`, Monte Carlo paths for `lemma`).
    #[arg(long, global = true, value_name = "N")]
    paths: Option<usize>,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convergence study over the configured horizons; writes records.csv,
    /// report.json, loglog.csv and convergence.svg.
    Run,
    /// The error constant and its factors for each horizon.
    Bounds,
    /// Exact sweep and Monte Carlo check of the exponential-martingale lemma.
    Lemma {
        /// Random step-function pairs in the exact sweep.
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        /// Pairs in the Monte Carlo check.
        #[arg(long, default_value_t = 5)]
        mc_pairs: usize,
    },
    /// Binned test of E[u(T,x) | Y_T] against the Kolmogorov approximation.
    Identity {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// Solver for u; defaults to the configured one.
        #[arg(long, value_parser = parse_solver)]
        solver: Option<USolver>,
        /// Inner paths per sample when the solver is fk-mc.
        #[arg(long)]
        inner: Option<usize>,
    },
    /// Grid solvers against Feynman-Kac Monte Carlo at one point.
    Oracle {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x: f64,
    },
    /// Splitting-solver moments against the Kalman-Bucy filter (linear sensor,
    /// outside the error bound's assumptions).
    Kalman,
    /// Quick oracle suite.
    Selftest,
}

fn parse_solver(s: &str) -> std::result::Result<USolver, String> {
    match s {
        "zakai-splitting" => Ok(USolver::ZakaiSplitting),
        "fk-mc" => Ok(USolver::FkMc),
        other => Err(format!("unknown solver `{other}` (zakai-splitting or fk-mc)")),
    }
}

impl Common {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(m) = &self.model {
            cfg.model = m.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = &self.horizons {
            cfg.horizons = t.clone();
        }
        if let Some(q) = self.q {
            cfg.q = q;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The first `--T` value, if any.
    fn first_horizon(&self) -> Option<f64> {
        self.horizons.as_ref().and_then(|t| t.first().copied())
    }
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        print!("{}", text());
    }
    Ok(())
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

fn summary(r: &ConvergenceReport) -> String {
    let mut s = format!(
        "model {}  q = {} (q1 = {}, q2 = {})  K = {}  solver {}  {} observation paths  seed {}\n",
        r.model,
        r.q,
        r.q1,
        r.q2,
        r.radius,
        r.u_solver.name(),
        r.n_obs_paths,
        r.seed
    );
    s.push_str(&format!(
        "{:>8} {:>12} {:>10} {:>7} {:>12} {:>12} {:>12}  ok\n",
        "T", "sup error", "se", "at x", "disc", "C T", "budget"
    ));
    for h in &r.horizons {
        s.push_str(&format!(
            "{:>8} {:>12.4e} {:>10.2e} {:>7.3} {:>12.2e} {:>12.4e} {:>12.2e}  {}\n",
            h.horizon,
            h.sup_error,
            h.sup_std_error,
            h.sup_x,
            h.discretization,
            h.bound,
            h.budget,
            if h.satisfied { "yes" } else { "NO" }
        ));
    }
    match r.fit {
        Some(f) => s.push_str(&format!(
            "slope {:.4} (95% CI {:.4} .. {:.4}), intercept {:.4}\n",
            f.slope, f.slope_ci.0, f.slope_ci.1, f.intercept
        )),
        None => s.push_str("slope: not available\n"),
    }
    s.push_str(&format!(
        "all bounds satisfied: {}  ({:.1} s on {} threads)\n",
        r.all_bounds_satisfied, r.metadata.elapsed_seconds, r.metadata.threads
    ));
    s
}

fn run(common: &Common) -> Result<bool> {
    let mut cfg = common.experiment()?;
    if let Some(n) = common.paths {
        cfg.n_obs_paths = n;
        cfg.validate()?;
    }
    let out = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("zakai-out"));
    let report = match convergence_study(&cfg) {
        Ok(r) => r,
        Err(Error::Study { completed, partial, source }) => {
            let files = emit_reports(&partial, &out)?;
            eprintln!(
                "study aborted after {completed} horizon(s); partial report in {}",
                files.report_json.display()
            );
            return Err(anyhow::Error::new(*source).context("convergence study failed"));
        }
        Err(e) => return Err(e.into()),
    };
    emit_reports(&report, &out)?;
    emit(common.json, &report, || format!("{}wrote {}\n", summary(&report), out.display()))?;
    Ok(report.all_bounds_satisfied)
}

#[derive(Serialize)]
struct BoundRow {
    #[serde(rename = "T")]
    horizon: f64,
    breakdown: zakai_core::bounds::ConstantBreakdown,
    bound: f64,
    optimal_q1: f64,
    optimal_q2: f64,
    optimal_constant: f64,
}

#[derive(Serialize)]
struct BoundsOutput {
    model: String,
    q: f64,
    q1: f64,
    q2: f64,
    #[serde(rename = "K")]
    radius: f64,
    constants: zakai_core::ModelConstants,
    rows: Vec<BoundRow>,
}

fn bounds(common: &Common) -> Result<bool> {
    let cfg = common.experiment()?;
    let setup = Setup::new(&cfg)?;
    let mut rows = Vec::new();
    for &t in &cfg.horizons {
        let p = setup.theorem_params(t)?;
        let b = constant_c_breakdown(&p)?;
        let (best, c_best) = optimize_split(&p)?;
        rows.push(BoundRow {
            horizon: t,
            breakdown: b,
            bound: b.value * t,
            optimal_q1: best.q1,
            optimal_q2: best.q2,
            optimal_constant: c_best,
        });
    }
    let out = BoundsOutput {
        model: cfg.model.clone(),
        q: cfg.q,
        q1: setup.q1,
        q2: setup.q2,
        radius: cfg.radius,
        constants: setup.constants,
        rows,
    };
    emit(common.json, &out, || {
        let c = &out.constants;
        let mut s = format!(
            "model {}  q = {} (q1 = {}, q2 = {})  K = {}\n\
             L = {:.6}  M = {:.6}  |h| = {:.6}  |u0| = {:.6}  |c| = {:.6}  (box radius {}, {} samples)\n",
            out.model, out.q, out.q1, out.q2, out.radius, c.lipschitz_h, c.growth_m, c.h_inf, c.u0_inf,
            c.c_inf, c.box_radius, c.n_samples
        );
        s.push_str(&format!(
            "{:>8} {:>9} {:>9} {:>11} {:>11} {:>9} {:>9} {:>12} {:>12} {:>22}\n",
            "T", "2/sqrt3", "|u0|", "exp", "kappa+", "L", "ball", "C", "C T", "min C (q1, q2)"
        ));
        for r in &out.rows {
            let b = &r.breakdown;
            s.push_str(&format!(
                "{:>8} {:>9.6} {:>9.6} {:>11.6} {:>11.6} {:>9.6} {:>9.6} {:>12.6} {:>12.6e} {:>10.6} ({:.3}, {:.3})\n",
                r.horizon, b.prefactor, b.u0_inf, b.exponential, b.kappa_term, b.lipschitz, b.ball,
                b.value, r.bound, r.optimal_constant, r.optimal_q1, r.optimal_q2
            ));
        }
        s
    })?;
    Ok(true)
}

#[derive(Serialize)]
struct LemmaOutput {
    sweep: zakai_core::experiments::LemmaSweepReport,
    monte_carlo: zakai_core::experiments::LemmaMcReport,
}

fn lemma(common: &Common, pairs: usize, mc_pairs: usize) -> Result<bool> {
    let seed = common.seed.unwrap_or(ExperimentConfig::default().seed);
    let qs = match common.q {
        Some(q) => vec![q],
        None => vec![1.0, 3.0],
    };
    let out = LemmaOutput {
        sweep: lemma_sweep(pairs, seed)?,
        monte_carlo: lemma_mc_check(&qs, mc_pairs, common.paths.unwrap_or(100_000), seed)?,
    };
    let passed = out.sweep.passed && out.monte_carlo.passed;
    emit(common.json, &out, || {
        let w = &out.sweep;
        let mut s = format!(
            "exact sweep: {} pairs, {} checks, {} violations, max lhs/bound {:.4}  {}\n",
            w.n_pairs,
            w.n_checks,
            w.violations,
            w.max_ratio,
            verdict(w.passed)
        );
        s.push_str(&format!("Monte Carlo ({} paths):\n", out.monte_carlo.n_paths));
        for c in &out.monte_carlo.cases {
            s.push_str(&format!(
                "  q = {}  pair {}  lhs {:.5e} (se {:.1e})  bound {:.5e}  {}\n",
                c.q,
                c.pair,
                c.lhs,
                c.std_error,
                c.bound,
                verdict(c.passed)
            ));
        }
        s
    })?;
    Ok(passed)
}

fn identity(common: &Common, x: f64, bins: usize, solver: Option<USolver>, inner: Option<usize>) -> Result<bool> {
    let mut cfg = common.experiment()?;
    if let Some(s) = solver {
        cfg.u_solver = s;
    }
    if let Some(n) = inner {
        cfg.fk_inner_paths = n;
    }
    let t = common.first_horizon().unwrap_or(0.1);
    let opts = IdentityConfig {
        n_samples: common.paths.unwrap_or(100_000),
        n_bins: bins,
        ..IdentityConfig::default()
    };
    let r = remark_identity_test(x, t, &cfg, &opts)?;
    emit(common.json, &r, || {
        let mut s = format!(
            "model {}  x = {}  T = {}  solver {}  {} samples\n{:>10} {:>10} {:>7} {:>12} {:>12} {:>10} {:>7}\n",
            r.model,
            r.x,
            r.horizon,
            r.solver.name(),
            r.n_samples,
            "y lo",
            "y hi",
            "count",
            "mean u",
            "mean rhs",
            "se",
            "z"
        );
        for b in &r.bins {
            s.push_str(&format!(
                "{:>10.4} {:>10.4} {:>7} {:>12.6} {:>12.6} {:>10.2e} {:>7.3}{}\n",
                b.y_lo,
                b.y_hi,
                b.count,
                b.mean_u,
                b.mean_rhs,
                b.std_error,
                b.z,
                if b.undersampled { "  undersampled" } else { "" }
            ));
        }
        s.push_str(&format!(
            "max |z| = {:.3} (threshold {})  {}\n",
            r.max_abs_z,
            opts.z_threshold,
            verdict(r.passed)
        ));
        s
    })?;
    Ok(r.passed)
}

fn oracle(common: &Common, x: f64) -> Result<bool> {
    let base = OracleConfig::default();
    let cfg = OracleConfig {
        model: common.model.clone().unwrap_or(base.model.clone()),
        x,
        horizon: common.first_horizon().unwrap_or(base.horizon),
        seed: common.seed.unwrap_or(base.seed),
        u_paths: common.paths.unwrap_or(base.u_paths),
        ..base
    };
    let r = oracle_triangle(&cfg)?;
    emit(common.json, &r, || {
        let mut s = format!(
            "model {}  x = {}  T = {}\n{:>4} {:>9} {:>13} {:>10} {:>13} {:>10}\n",
            cfg.model, cfg.x, cfg.horizon, "", "y", "Monte Carlo", "se", "grid", "budget"
        );
        for row in &r.rows {
            s.push_str(&format!(
                "{:>4} {:>9.4} {:>13.6e} {:>10.2e} {:>13.6e} {:>10.2e}  {}\n",
                row.kind,
                row.y,
                row.monte_carlo,
                row.std_error,
                row.grid_value,
                row.budget,
                verdict(row.passed)
            ));
        }
        s.push_str(&format!("{}\n", verdict(r.passed)));
        s
    })?;
    Ok(r.passed)
}

fn kalman(common: &Common) -> Result<bool> {
    let base = KalmanConfig::default();
    let cfg = KalmanConfig {
        seed: common.seed.unwrap_or(base.seed),
        n_paths: common.paths.unwrap_or(base.n_paths),
        horizon: common.first_horizon().unwrap_or(base.horizon),
        ..base
    };
    let r = kalman_validation(&cfg)?;
    emit(common.json, &r, || {
        let mut s = format!("{}\nT = {}\n", r.label, r.horizon);
        for p in &r.paths {
            s.push_str(&format!(
                "path {:>3}  Y_T {:>8.4}  mean {:>9.5} vs {:>9.5}  var {:>8.5} vs {:>8.5}\n",
                p.index, p.y_terminal, p.zakai.mean, p.kalman_bucy.mean, p.zakai.variance, p.kalman_bucy.variance
            ));
        }
        s.push_str(&format!(
            "max relative error: mean {:.2e}, variance {:.2e} (tolerance {})  {}\n",
            r.max_mean_rel_error,
            r.max_var_rel_error,
            r.tolerance,
            verdict(r.passed)
        ));
        s
    })?;
    Ok(r.passed)
}

fn self_test(common: &Common) -> Result<bool> {
    let checks = selftest(common.seed.unwrap_or(ExperimentConfig::default().seed))?;
    let passed = checks.iter().all(|c| c.passed);
    emit(common.json, &checks, || {
        let mut s = String::new();
        for c in &checks {
            s.push_str(&format!("{:<20} {}  {}\n", c.name, verdict(c.passed), c.detail));
        }
        s
    })?;
    Ok(passed)
}

fn dispatch(cli: &Cli) -> Result<bool> {
    let c = &cli.common;
    match &cli.command {
        Command::Run => run(c),
        Command::Bounds => bounds(c),
        Command::Lemma { pairs, mc_pairs } => lemma(c, *pairs, *mc_pairs),
        Command::Identity { x, bins, solver, inner } => identity(c, *x, *bins, *solver, *inner),
        Command::Oracle { x } => oracle(c, *x),
        Command::Kalman => kalman(c),
        Command::Selftest => self_test(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
