use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gmvnet_core::estimators::qis;
use gmvnet_core::gmv::{gmv_weights_longonly, sample_correlation, QpOptions};
use gmvnet_core::linalg::eigh;
use gmvnet_core::model::ModelParams;
use gmvnet_core::panel::{generate_synthetic, MarketStore, SyntheticMarketSpec};
use gmvnet_core::rng::{self, streams};
use gmvnet_core::train::{draw_sample, sample_gradient};
use nalgebra::DMatrix;

fn returns(n: usize, days: usize) -> DMatrix<f64> {
    let spec = SyntheticMarketSpec { n_assets: n, n_days: days, n_factors: 3, seed: 1, ..Default::default() };
    generate_synthetic(&spec).unwrap().panel.returns
}

fn spectral(c: &mut Criterion) {
    let mut g = c.benchmark_group("eigh");
    for n in [50, 100, 250] {
        let (corr, _) = sample_correlation(&returns(n, 2 * n)).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &corr, |b, m| b.iter(|| eigh(m).unwrap()));
    }
    g.finish();

    let mut g = c.benchmark_group("qis");
    for n in [50, 250] {
        let (_, dec) = sample_correlation(&returns(n, 2 * n)).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &dec.values, |b, l| b.iter(|| qis(l, 0.5).unwrap()));
    }
    g.finish();
}

fn long_only(c: &mut Criterion) {
    let mut g = c.benchmark_group("long_only_qp");
    for n in [50, 100] {
        let x = returns(n, 2 * n);
        let sigma = x.transpose() * &x / x.nrows() as f64;
        g.bench_with_input(BenchmarkId::from_parameter(n), &sigma, |b, s| {
            b.iter(|| gmv_weights_longonly(s, QpOptions::default()).unwrap())
        });
    }
    g.finish();
}

fn network(c: &mut Criterion) {
    let market = generate_synthetic(&SyntheticMarketSpec { n_assets: 100, n_days: 400, seed: 2, ..Default::default() }).unwrap();
    let store = MarketStore::from_panel(&market.panel);
    let params = ModelParams::init(120, 64, 2).unwrap();
    let mut g = c.benchmark_group("network");
    g.sample_size(20);
    for n in [20, 60] {
        let s = draw_sample(&store, (0, 399), 120, 5, (n, n), &mut rng::stream(2, streams::TRAIN_SAMPLES)).unwrap();
        g.bench_with_input(BenchmarkId::new("forward", n), &s, |b, s| b.iter(|| params.predict(&s.window).unwrap()));
        g.bench_with_input(BenchmarkId::new("forward_backward", n), &s, |b, s| b.iter(|| sample_gradient(&params, s).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, spectral, long_only, network);
criterion_main!(benches);
