use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use zakai_bench::{observation, ou_tanh};
use zakai_core::bounds::{lemma_bound, lemma_lhs_exact_q2, StepFunction};
use zakai_core::fk::path_functionals;
use zakai_core::kolmogorov_pde::{evaluate_approximation, initial_condition, solve, KolmogorovSolver, ZakaiSolver};
use zakai_core::paths::{StreamFamily, StreamTag};
use zakai_core::{Axis, Grid2D};

fn kolmogorov(c: &mut Criterion) {
    let coeffs = ou_tanh();
    let mut g = c.benchmark_group("kolmogorov");
    for n in [101usize, 201, 401] {
        let grid = Grid2D::for_horizon(0.1, -6.0, 6.0, n, n, 7.5, 1.0).unwrap();
        g.bench_with_input(BenchmarkId::new("step", n), &grid, |b, grid| {
            let mut sol = initial_condition(grid, 0.1, &coeffs).unwrap();
            let mut solver = KolmogorovSolver::new(*grid, 0.1, 0.1 / 128.0, &coeffs).unwrap();
            b.iter(|| solver.step(black_box(&mut sol)).unwrap());
        });
    }
    let grid = Grid2D::for_horizon(0.1, -6.0, 6.0, 201, 201, 7.5, 1.0).unwrap();
    g.sample_size(10);
    g.bench_function("solve_201x201_64", |b| b.iter(|| solve(black_box(&grid), 0.1, 64, &coeffs).unwrap()));
    let sol = solve(&grid, 0.1, 64, &coeffs).unwrap();
    g.bench_function("evaluate", |b| {
        b.iter(|| evaluate_approximation(&sol, black_box(0.3), black_box(-0.2)).unwrap())
    });
    g.finish();
}

fn zakai(c: &mut Criterion) {
    let coeffs = ou_tanh();
    let obs = observation(0.1, 128);
    let solver = ZakaiSolver::new(Axis::new(-6.0, 6.0, 401).unwrap(), obs.grid(), &coeffs).unwrap();
    c.bench_function("zakai_solve_401_128", |b| b.iter(|| solver.solve(black_box(&obs)).unwrap()));
}

fn feynman_kac(c: &mut Criterion) {
    let coeffs = ou_tanh();
    let obs = observation(0.1, 128);
    let fam = StreamFamily::new(3, StreamTag::Auxiliary, 0);
    let mut g = c.benchmark_group("feynman_kac");
    g.sample_size(20);
    g.bench_function("functionals_1000x128", |b| {
        b.iter(|| path_functionals(&[0.0], &coeffs, &obs.grid(), Some(&obs), 1000, fam).unwrap())
    });
    g.finish();
}

fn lemma(c: &mut Criterion) {
    let f = StepFunction::uniform(0.8, vec![0.3, -1.2, 0.7, 1.9, -0.4, 0.0, 1.1, -1.5]).unwrap();
    let g = StepFunction::uniform(0.8, vec![0.2, -1.0, 0.9, 1.7, -0.6, 0.1, 1.3, -1.4]).unwrap();
    c.bench_function("lemma_exact_and_bound", |b| {
        b.iter(|| {
            let lhs = lemma_lhs_exact_q2(black_box(&f), black_box(&g)).unwrap();
            let rhs = lemma_bound(f.sup_norm(), g.sup_norm(), f.l2_distance(&g).unwrap(), 0.8, 4.0, 4.0).unwrap();
            lhs <= rhs
        })
    });
}

criterion_group!(benches, kolmogorov, zakai, feynman_kac, lemma);
criterion_main!(benches);
