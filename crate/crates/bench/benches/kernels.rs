use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fracflow_bench::{llgr_params, small_map};
use fracflow_core::dynamics::{rhs, Scheme, Stepper};
use fracflow_core::norms::energy;
use fracflow_core::spectral::{forward_transform, fractional_laplacian, inverse_transform};

const CASES: [(usize, usize); 3] = [(1, 512), (2, 64), (2, 128)];

fn transforms(c: &mut Criterion) {
    let mut group = c.benchmark_group("half_laplacian");
    for (n, nodes) in CASES {
        let u = small_map(n, nodes);
        group.bench_with_input(BenchmarkId::new(format!("{n}d"), nodes), &u, |b, u| {
            b.iter(|| {
                let uh = fractional_laplacian(&forward_transform(u.values()), 0.5).unwrap();
                inverse_transform(&uh).unwrap()
            })
        });
    }
    group.finish();
}

fn right_hand_side(c: &mut Criterion) {
    let mut group = c.benchmark_group("rhs_llgr");
    for (n, nodes) in CASES {
        let u = small_map(n, nodes);
        let p = llgr_params(n);
        group.bench_with_input(BenchmarkId::new(format!("{n}d"), nodes), &u, |b, u| {
            b.iter(|| rhs(u, &p).unwrap())
        });
    }
    group.finish();
}

fn steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for scheme in [Scheme::Etdrk2, Scheme::Rk4] {
        for (n, nodes) in CASES {
            let u = small_map(n, nodes);
            let mut p = llgr_params(n);
            p.scheme = scheme;
            p.horizon = 1e6;
            let mut stepper = Stepper::new(&u, &p).unwrap();
            group.bench_function(BenchmarkId::new(format!("{scheme}_{n}d"), nodes), |b| {
                b.iter(|| stepper.step().unwrap())
            });
        }
    }
    group.finish();
}

fn diagnostics(c: &mut Criterion) {
    let u = small_map(2, 128);
    c.bench_function("energy_2d_128", |b| b.iter(|| energy(&u)));
}

criterion_group!(benches, transforms, right_hand_side, steps, diagnostics);
criterion_main!(benches);
