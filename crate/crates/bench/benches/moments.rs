use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use karlin::exact_moments::{mean_poisson_exact, var_binomial_exact, var_identity_rhs, var_poisson_exact};
use karlin::{CountKind, SeriesOptions, WeightModel};

const FAMILIES: [&str; 4] = ["zipf:alpha=0.5", "pipolylog:beta=2", "pistretch", "alpha1logsq"];

fn poisson_series(c: &mut Criterion) {
    let opts = SeriesOptions::default();
    let mut g = c.benchmark_group("poisson_series");
    for fam in FAMILIES {
        let m = WeightModel::parse(fam).unwrap();
        for t in [1e6, 1e10] {
            g.bench_with_input(BenchmarkId::new(fam, t), &t, |b, &t| {
                b.iter(|| {
                    let e = mean_poisson_exact(&m, 1, black_box(t), CountKind::ExactlyJ, &opts).unwrap();
                    let v = var_poisson_exact(&m, 1, black_box(t), CountKind::ExactlyJ, &opts).unwrap();
                    e.value + v.value
                })
            });
        }
    }
    g.finish();
}

fn identity_rhs(c: &mut Criterion) {
    let m = WeightModel::parse("zipf:alpha=0.5").unwrap();
    let opts = SeriesOptions::default();
    c.bench_function("var_identity_rhs/zipf/1e8", |b| b.iter(|| var_identity_rhs(&m, 2, black_box(1e8), &opts).unwrap()));
}

fn binomial_variance(c: &mut Criterion) {
    let m = WeightModel::parse("zipf:alpha=0.5").unwrap();
    let opts = SeriesOptions::default();
    let mut g = c.benchmark_group("var_binomial_exact");
    g.sample_size(10);
    for n in [1_000u64, 10_000] {
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| b.iter(|| var_binomial_exact(&m, 1, n, 2 * n, &opts).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, poisson_series, identity_rhs, binomial_variance);
criterion_main!(benches);
