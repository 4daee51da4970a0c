use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use vacuum_nsp::integrator::{self, step_state};
use vacuum_nsp::polytrope::{solve_dimensionless, solve_lane_emden, DEFAULT_TOL};
use vacuum_nsp::scheme::{rhs, Tridiagonal};
use vacuum_nsp::{Mode, StepPolicy, TimeStep};
use vacuum_nsp_bench::{dilated_star, MASS};

fn profile(c: &mut Criterion) {
    let mut g = c.benchmark_group("profile");
    g.bench_function("dimensionless_n2", |b| b.iter(|| solve_dimensionless(black_box(2.0), DEFAULT_TOL)));
    g.bench_function("lane_emden_gamma1.5", |b| b.iter(|| solve_lane_emden(black_box(1.5), MASS, DEFAULT_TOL)));
    g.finish();
}

fn operators(c: &mut Criterion) {
    let mut g = c.benchmark_group("rhs");
    for n in [100, 400, 1600] {
        let (bg, data) = dilated_star(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| rhs(&bg, black_box(&data.state))));
    }
    g.finish();

    let mut g = c.benchmark_group("thomas");
    for n in [400, 1600] {
        let mut t = Tridiagonal::zeros(n);
        t.diag.iter_mut().for_each(|d| *d = -2.0);
        t.lower.iter_mut().chain(t.upper.iter_mut()).for_each(|d| *d = 1.0);
        let rhs_vec = vec![1.0; n];
        let mut x = vec![0.0; n];
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| t.solve_shifted(black_box(1e-3), &rhs_vec, &mut x))
        });
    }
    g.finish();
}

fn stepping(c: &mut Criterion) {
    let mut g = c.benchmark_group("step");
    let (bg, data) = dilated_star(400);
    for mode in [Mode::ImexBe, Mode::ImexCn] {
        let policy = StepPolicy { mode, dt: TimeStep::Fixed(1e-3), ..Default::default() };
        g.bench_function(format!("{mode:?}"), |b| {
            b.iter(|| step_state(&bg, &data.anchor, black_box(&data.state), &policy))
        });
    }
    let policy = StepPolicy { t_end: 1.0, ..Default::default() };
    g.sample_size(10);
    g.bench_function("run_to_t1", |b| {
        b.iter(|| integrator::run_state(&bg, &data.anchor, &data.state, &policy, 0.5, |_| Ok(true)))
    });
    g.finish();
}

criterion_group!(benches, profile, operators, stepping);
criterion_main!(benches);
