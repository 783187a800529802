use acb_core::local_poly::Smoother;
use acb_core::model::simulate_values;
use acb_core::wavelet::{analyze, build_family, synthesize};
use acb_core::{adaptive_estimate, build_band, BandParams, LepskiParams, LocalPolyConfig};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn noisy(n: usize) -> Vec<f64> {
    let truth: Vec<f64> = (1..=n).map(|i| (6.0 * i as f64 / n as f64).sin()).collect();
    simulate_values(&truth, 1.0, 7, "bench").y
}

fn smoother(c: &mut Criterion) {
    let mut group = c.benchmark_group("smoother_apply");
    for n in [1024, 4096, 16384] {
        let y = noisy(n);
        let sm = Smoother::new(n, 0.05, &LocalPolyConfig::default(), 1).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &y, |b, y| {
            b.iter(|| sm.apply(black_box(y)).unwrap())
        });
    }
    group.finish();
}

fn dwt(c: &mut Criterion) {
    let family = build_family("db3").unwrap();
    let mut group = c.benchmark_group("dwt_db3");
    for n in [1024, 16384] {
        let y = noisy(n);
        group.bench_with_input(BenchmarkId::new("analyze", n), &y, |b, y| {
            b.iter(|| analyze(black_box(y), &family, 0).unwrap())
        });
        let coeffs = analyze(&y, &family, 0).unwrap();
        group.bench_with_input(BenchmarkId::new("synthesize", n), &coeffs, |b, c| {
            b.iter(|| synthesize(black_box(c), &family).unwrap())
        });
    }
    group.finish();
}

fn procedures(c: &mut Criterion) {
    let n = 4096;
    let sample = simulate_values(
        &(1..=n).map(|i| (6.0 * i as f64 / n as f64).sin()).collect::<Vec<_>>(),
        1.0,
        11,
        "sine",
    );
    let cfg = LocalPolyConfig::default();
    let lepski = LepskiParams::new(cfg, 3.0);
    c.bench_function("lepski_4096", |b| {
        b.iter(|| adaptive_estimate(black_box(&sample), &lepski).unwrap())
    });
    let mut params = BandParams::new(0.75, 2.0, 10.0, 0.05, cfg);
    params.l_const = 10.0;
    params.kappa = 3.5;
    params.lambda = 20.0;
    params.lepski.m_const = 3.0;
    c.bench_function("band_4096", |b| b.iter(|| build_band(black_box(&sample), &params).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = smoother, dwt, procedures
}
criterion_main!(benches);
