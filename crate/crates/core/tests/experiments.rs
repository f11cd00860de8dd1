use approx::assert_relative_eq;
use zakai_core::bounds::moment_increment_bound;
use zakai_core::experiments::{
    convergence_study, emit_reports, lq_error_at, read_report, records_csv, remark_identity_test,
    sup_error_ball, ExperimentConfig, GridConfig, IdentityConfig, USolver,
};
use zakai_core::kolmogorov_pde::{evaluate_approximation, solve, Grid2D};
use zakai_core::model::{build_model, estimate_constants, gaussian_pdf, DerivedCoefficients};
use zakai_core::paths::{simulate_xi, StreamFamily, StreamTag, TimeGrid};

fn small(model: &str) -> ExperimentConfig {
    ExperimentConfig {
        model: model.into(),
        horizons: vec![0.2, 0.1, 0.05],
        n_probes: 5,
        n_obs_paths: 64,
        grid: GridConfig {
            n_x: 201,
            n_y: 201,
            pde_steps: 32,
            zakai_steps: 32,
            ..GridConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

fn coeffs(model: &str) -> DerivedCoefficients {
    DerivedCoefficients::derive(&build_model(model, &Default::default()).unwrap()).unwrap()
}

#[test]
fn single_probe_sup_is_the_pointwise_error() {
    let mut cfg = small("ou-tanh");
    cfg.probes = Some(vec![0.5]);
    let rec = lq_error_at(0.5, 0.1, &cfg).unwrap();
    let sup = sup_error_ball(0.1, &cfg).unwrap();
    assert_eq!(sup.records.len(), 1);
    assert_eq!(sup.sup_error, rec.lq_error);
    assert_eq!(sup.sup_x, 0.5);
    assert!(lq_error_at(1.5, 0.1, &cfg).is_err());
}

#[test]
fn sup_dominates_every_probe() {
    let s = sup_error_ball(0.2, &small("ou-tanh")).unwrap();
    assert_eq!(s.records.len(), 5);
    for r in &s.records {
        assert!(r.lq_error <= s.sup_error);
        assert!(r.lq_error > 0.0 && r.mc_std_error > 0.0);
    }
    assert!(s.records.iter().any(|r| r.lq_error == s.sup_error));
}

#[test]
fn symmetric_model_has_a_symmetric_error_profile() {
    // b odd, h odd and u₀ even: the error at x and −x has the same law.
    let mut cfg = small("ou-tanh");
    cfg.n_obs_paths = 400;
    cfg.probes = Some(vec![-0.75, 0.75]);
    let s = sup_error_ball(0.2, &cfg).unwrap();
    let (a, b) = (&s.records[0], &s.records[1]);
    let slack = 3.0 * (a.mc_std_error + b.mc_std_error)
        + a.discretization.unwrap_or(0.0)
        + b.discretization.unwrap_or(0.0);
    assert!((a.lq_error - b.lq_error).abs() <= slack, "{} vs {}", a.lq_error, b.lq_error);
}

#[test]
fn records_are_deterministic_and_complete() {
    let cfg = small("ou-tanh");
    let r1 = convergence_study(&cfg).unwrap();
    let r2 = convergence_study(&cfg).unwrap();
    let csv = records_csv(&r1);
    assert_eq!(csv, records_csv(&r2));
    assert_eq!(csv.lines().count(), 1 + 3 * 5);
    assert!(csv.starts_with("model,T,x,q,lq_error,se,bound,solver,seed\n"));
    assert!(r1.fit.is_some());

    let dir = tempfile::tempdir().unwrap();
    let files = emit_reports(&r1, dir.path()).unwrap();
    assert_eq!(read_report(&files.report_json).unwrap(), r1);
    assert_eq!(std::fs::read_to_string(&files.records).unwrap(), csv);
    assert_eq!(std::fs::read_to_string(&files.loglog).unwrap().lines().count(), 4);
}

#[test]
fn constant_sensor_approximation_matches_the_closed_form() {
    // h ≡ h0: e^{Y²/2T} v(T,x,Y) = p_T(x) e^{h0 Y − h0² T/2} with p_T the OU
    // marginal started from N(0, 1/4).
    let c = coeffs("const-h");
    let (t, h0): (f64, f64) = (0.2, 0.5);
    let var = 0.25 * (-2.0 * t).exp() + 0.5 * (1.0 - (-2.0 * t).exp());
    let worst = |n_x: usize| {
        let grid = Grid2D::for_horizon(t, -6.0, 6.0, n_x, 401, 7.5, h0).unwrap();
        let sol = solve(&grid, t, 64, &c).unwrap();
        let mut w: f64 = 0.0;
        for x in [-1.0, -0.3, 0.0, 0.6, 1.2] {
            for y in [-0.8, -0.2, 0.0, 0.4, 1.0] {
                let want = gaussian_pdf(x, 0.0, var) * (h0 * y - 0.5 * h0 * h0 * t).exp();
                w = w.max((evaluate_approximation(&sol, x, y).unwrap() / want - 1.0).abs());
            }
        }
        w
    };
    // Second order in x; the splitting in time is exact here.
    let (coarse, fine) = (worst(401), worst(801));
    assert!(coarse < 1e-3, "{coarse}");
    assert_relative_eq!(coarse / fine, 4.0, max_relative = 0.1);
}

#[test]
fn identity_holds_for_the_constant_sensor() {
    let mut cfg = small("const-h");
    cfg.u_solver = USolver::FkMc;
    cfg.fk_inner_paths = 1;
    let r = remark_identity_test(
        0.3,
        0.1,
        &cfg,
        &IdentityConfig {
            n_samples: 20_000,
            ..IdentityConfig::default()
        },
    )
    .unwrap();
    assert!(r.passed, "max |z| {}", r.max_abs_z);
    assert_eq!(r.bins.len(), 20);
    assert!(r.bins.windows(2).all(|w| w[0].y_hi <= w[1].y_lo));
}

#[test]
fn fk_and_splitting_solvers_agree_on_the_error() {
    let base = ExperimentConfig {
        model: "ou-tanh".into(),
        probes: Some(vec![0.5]),
        n_obs_paths: 64,
        fk_inner_paths: 20_000,
        richardson: true,
        grid: GridConfig {
            pde_steps: 64,
            zakai_steps: 64,
            ..GridConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let z = lq_error_at(0.5, 0.4, &base).unwrap();
    let f = lq_error_at(
        0.5,
        0.4,
        &ExperimentConfig {
            u_solver: USolver::FkMc,
            ..base.clone()
        },
    )
    .unwrap();
    let slack = 3.0 * (z.mc_std_error + f.mc_std_error)
        + z.discretization.unwrap()
        + f.discretization.unwrap();
    assert!(
        (z.lq_error - f.lq_error).abs() <= slack,
        "splitting {} vs fk-mc {} (slack {slack})",
        z.lq_error,
        f.lq_error
    );
}

#[test]
fn sensor_increments_respect_their_moment_bound() {
    let c = coeffs("ou-tanh");
    let consts = estimate_constants(&c, 3.0, 4000).unwrap();
    let (t, n) = (0.1, 16);
    let grid = TimeGrid::new(t, n).unwrap();
    let fam = StreamFamily::new(99, StreamTag::Auxiliary, 0);
    let n_paths = 100_000;
    let hs: Vec<Vec<f64>> = (0..n_paths)
        .map(|i| {
            let p = simulate_xi(&[0.0], &c, &grid, fam.stream(i)).unwrap();
            (0..=n).map(|k| c.h(p.state(k))).collect()
        })
        .collect();
    for (ks, kr) in [(0, 0), (0, 8), (4, 4), (2, 3), (16, 16), (0, 16), (12, 1)] {
        let (s, r) = (grid.node(ks), grid.node(kr));
        // ξ̂ at time T − s is node n − ks.
        let sq: Vec<f64> = hs.iter().map(|h| (h[n - ks] - h[kr]).powi(2)).collect();
        let mean = sq.iter().sum::<f64>() / n_paths as f64;
        let sd = (sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_paths - 1) as f64).sqrt();
        let bound = moment_increment_bound(0.0, consts.lipschitz_h, consts.growth_m, t, s, r).unwrap();
        assert!(
            mean <= bound + 3.0 * sd / (n_paths as f64).sqrt(),
            "s = {s}, r = {r}: {mean} > {bound}"
        );
    }
}
