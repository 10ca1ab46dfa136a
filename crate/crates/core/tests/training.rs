use std::sync::Arc;

use chrono::NaiveDate;
use gmvnet_core::backtest::{paired_bootstrap, run_frictionless, BacktestConfig};
use gmvnet_core::panel::{business_days, generate_synthetic, Innovation, MarketStore, ReturnPanel, SyntheticMarketSpec};
use gmvnet_core::rng::{self, streams};
use gmvnet_core::strategy::Strategy;
use gmvnet_core::train::{draw_sample, train, TrainConfig};
use gmvnet_core::Constraint;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn basket_sizes_are_uniform() {
    let (days, n_assets) = (40, 360);
    let mut r = rng::stream(1, streams::SYNTHETIC);
    let x = DMatrix::from_fn(days, n_assets, |_, _| 0.01 * r.sample::<f64, _>(StandardNormal));
    let dates = business_days(NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(), days);
    let ids = (0..n_assets).map(|j| format!("S{j:03}")).collect();
    let store = MarketStore::from_panel(&ReturnPanel::new(dates, ids, x).unwrap());

    let (lo, hi, draws) = (50, 350, 10_000);
    let mut counts = vec![0usize; hi - lo + 1];
    let mut r = rng::stream(2, streams::TRAIN_SAMPLES);
    for _ in 0..draws {
        let s = draw_sample(&store, (0, days - 1), 10, 5, (lo, hi), &mut r).unwrap();
        assert_eq!(s.last_input_row() + 2, s.first_output_row());
        counts[s.n() - lo] += 1;
    }
    let expected = draws as f64 / counts.len() as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.01, "χ² = {chi2:.1}, p = {p:.4}");
}

#[test]
fn second_epoch_trains_lower() {
    let market =
        generate_synthetic(&SyntheticMarketSpec { n_assets: 60, n_days: 900, n_factors: 3, seed: 4, ..Default::default() }).unwrap();
    let store = MarketStore::from_panel(&market.panel);
    let cfg = TrainConfig {
        n_min: 20,
        n_max: 40,
        epochs: 2,
        steps_per_epoch: 20,
        calibration_start: 0,
        calibration_end: 899,
        seed: 4,
        ..TrainConfig::desk()
    };
    assert_eq!(cfg.dt_in, 120);
    let out = train(&store, &cfg).unwrap();
    let h = &out.history;
    assert_eq!(h.len(), 2);
    assert!(h[1].train < h[0].train, "{} then {}", h[0].train, h[1].train);
}

#[test]
fn trained_network_backtests_below_sample_estimator() {
    let market = generate_synthetic(&SyntheticMarketSpec {
        n_assets: 120,
        n_days: 2400,
        n_factors: 3,
        innovation: Innovation::StudentT { nu: 5.0 },
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    let store = MarketStore::from_panel(&market.panel);
    let cfg = TrainConfig { epochs: 2, steps_per_epoch: 50, calibration_start: 0, calibration_end: 1599, seed: 8, ..TrainConfig::desk() };
    let model = Arc::new(train(&store, &cfg).unwrap().checkpoint.params);

    let bt = BacktestConfig {
        n: 50,
        rebalances: 40,
        interval: 5,
        dt_in: cfg.dt_in,
        constraint: Constraint::Unconstrained,
        replications: 20,
        seed: 8,
        first_row: 0,
        last_row: store.n_days() - 1,
        calibration_end: Some(cfg.calibration_end),
        parallel: true,
    };
    let nn = run_frictionless(&store, &Strategy::Nn(model), &bt).unwrap();
    let mle = run_frictionless(&store, &Strategy::Mle, &bt).unwrap();
    // same seed, same baskets and dates
    for (a, b) in nn.replications.iter().zip(&mle.replications) {
        assert_eq!(a.start_row, b.start_row);
    }
    assert!(nn.aggregate.loss <= mle.aggregate.loss, "NN {:.4e} vs MLE {:.4e}", nn.aggregate.loss, mle.aggregate.loss);
    let losses = |r: &gmvnet_core::backtest::BacktestReport| r.replications.iter().map(|x| x.metrics.loss).collect::<Vec<_>>();
    let p = paired_bootstrap(&losses(&nn), &losses(&mle), 2000, 8).unwrap();
    assert!(p < 0.5, "bootstrap share {p}");
}
