use annulus_bench::*;
use annulus_core::field::AnnulusKernel;
use annulus_core::ot::{barycenter, wasserstein2_sq, BarycenterSettings};
use annulus_core::{fit_map, OptimizerSettings};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn gram(c: &mut Criterion) {
    let config = paper_config();
    let h = hyperparameters(1.0);
    let k = AnnulusKernel::new(&h, &config.wave_numbers);
    let mut group = c.benchmark_group("gram");
    for n in [27, 200, 800] {
        let locs = scattered(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &locs, |b, l| {
            b.iter(|| k.gram(black_box(l)))
        });
    }
    group.finish();
}

fn fit(c: &mut Criterion) {
    let config = paper_config();
    let data = rake_dataset(1);
    let mut group = c.benchmark_group("fit_map");
    group.sample_size(10);
    for parallel in [false, true] {
        let settings = OptimizerSettings {
            parallel,
            ..OptimizerSettings::default()
        };
        let name = if parallel { "parallel" } else { "serial" };
        group.bench_function(name, |b| {
            b.iter(|| fit_map(black_box(&data), &config, &settings).expect("fit"))
        });
    }
    group.finish();
}

fn area_average(c: &mut Criterion) {
    let config = paper_config();
    let field = fit_map(&rake_dataset(2), &config, &OptimizerSettings::default()).expect("fit");
    c.bench_function("area_average", |b| {
        b.iter(|| {
            black_box(&field)
                .area_average_with(&Default::default())
                .expect("average")
        })
    });
}

fn wasserstein(c: &mut Criterion) {
    let mut group = c.benchmark_group("wasserstein2_sq");
    for n in [27, 128, 400] {
        let locs = scattered(n);
        let (a, b) = (prior(&locs, 1.0), prior(&locs, 2.0));
        group.bench_with_input(BenchmarkId::from_parameter(n), &(a, b), |bench, (a, b)| {
            bench.iter(|| wasserstein2_sq(black_box(a), black_box(b)).expect("w2"))
        });
    }
    group.finish();
}

fn bary(c: &mut Criterion) {
    let mut group = c.benchmark_group("barycenter");
    group.sample_size(10);
    for n in [27, 128] {
        let locs = scattered(n);
        let fields: Vec<_> = (1..=5).map(|s| prior(&locs, s as f64)).collect();
        group.bench_with_input(BenchmarkId::new("k5", n), &fields, |b, f| {
            b.iter(|| {
                barycenter(black_box(f), &[0.2; 5], &BarycenterSettings::default()).expect("bary")
            })
        });
    }
    group.finish();
}

criterion_group!(benches, gram, fit, area_average, wasserstein, bary);
criterion_main!(benches);
