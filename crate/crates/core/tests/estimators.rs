use chrono::NaiveDate;
use gmvnet_core::estimators::{
    calibrate_ao, clip_eigenvalues, erb_weights, ledoit_wolf, marchenko_pastur_edge, oracle_eigenvalues, power_map, qis,
};
use gmvnet_core::gmv::sample_correlation;
use gmvnet_core::linalg;
use gmvnet_core::panel::{business_days, MarketStore, ReturnPanel};
use gmvnet_core::rng::{self, streams};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian(seed: u64, t: usize, n: usize) -> DMatrix<f64> {
    let mut r = rng::substream(seed, streams::MONTE_CARLO, 0);
    DMatrix::from_fn(t, n, |_, _| r.sample::<f64, _>(StandardNormal))
}

fn demeaned_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (t, n) = x.shape();
    let mean = x.row_mean();
    let xc = DMatrix::from_fn(t, n, |i, j| x[(i, j)] - mean[j]);
    xc.transpose() * xc / t as f64
}

fn spectrum(c: &DMatrix<f64>) -> Vec<f64> {
    linalg::eigh(c).unwrap().values
}

#[test]
fn shrinkage_beats_the_sample_covariance() {
    let (n, t) = (50, 100);
    let id = DMatrix::<f64>::identity(n, n);
    let wins = (0..200u64)
        .filter(|&seed| {
            let x = gaussian(seed, t, n);
            let lw = ledoit_wolf(&x).unwrap();
            (lw.covariance - &id).norm() < (demeaned_covariance(&x) - &id).norm()
        })
        .count();
    assert!(wins >= 190, "{wins}/200");
}

#[test]
fn squaring_noise_correlations() {
    let (n, t) = (12, 2000);
    let x = gaussian(11, t, n);
    let (c, _) = sample_correlation(&x).unwrap();
    let pm = power_map(&c, 2.0).unwrap();
    let (mut sq, mut mapped, mut raw) = (0.0, 0.0, 0.0);
    for i in 0..n {
        assert_eq!(pm[(i, i)], 1.0);
        for j in 0..n {
            if i != j {
                sq += c[(i, j)].powi(2);
                mapped += pm[(i, j)].abs();
                raw += c[(i, j)].abs();
            }
        }
    }
    assert!((mapped - sq).abs() < 1e-12 * sq);
    // |c| ~ half-normal with scale 1/√T, c² has mean 1/T
    let ratio = (mapped / raw) * (t as f64).sqrt();
    let expected = (std::f64::consts::PI / 2.0).sqrt();
    assert!((ratio / expected - 1.0).abs() < 0.2, "{ratio} vs {expected}");
}

#[test]
fn quadratic_shrinkage_pulls_noise_toward_one() {
    let (n, t) = (100, 400);
    let x = gaussian(3, t, n);
    let eigs = spectrum(&demeaned_covariance(&x));
    let cleaned = qis(&eigs, n as f64 / t as f64).unwrap();
    let mad = |v: &[f64]| v.iter().map(|l| (l - 1.0).abs()).sum::<f64>() / v.len() as f64;
    assert!(mad(&cleaned) < 0.5 * mad(&eigs), "{} vs {}", mad(&cleaned), mad(&eigs));
    assert!(cleaned.windows(2).all(|w| w[0] <= w[1]));
    let trace = |v: &[f64]| v.iter().sum::<f64>();
    assert!((trace(&cleaned) - trace(&eigs)).abs() < 1e-9 * trace(&eigs));
}

#[test]
fn quadratic_shrinkage_vanishes_with_long_samples() {
    // a spread-out population spectrum; with an identity population the
    // sample spread (about ±2√(n/Δt)) is exactly what shrinkage removes
    let n = 100;
    let t = 500 * n;
    let scale: Vec<f64> = (0..n).map(|j| (0.5 + 4.5 * j as f64 / (n - 1) as f64).sqrt()).collect();
    let z = gaussian(4, t, n);
    let x = DMatrix::from_fn(t, n, |i, j| z[(i, j)] * scale[j]);
    let eigs = spectrum(&demeaned_covariance(&x));
    let cleaned = qis(&eigs, n as f64 / t as f64).unwrap();
    let worst = eigs.iter().zip(&cleaned).map(|(a, b)| (a - b).abs() / a).fold(0.0, f64::max);
    assert!(worst < 0.02, "{worst}");
}

#[test]
fn clipping_flattens_the_noise_band() {
    let (n, t) = (40, 200);
    let x = gaussian(5, t, n);
    let (c, dec) = sample_correlation(&x).unwrap();
    let edge = marchenko_pastur_edge(n as f64 / t as f64);
    let clipped = clip_eigenvalues(&dec.values, edge);
    assert!((clipped.iter().sum::<f64>() - c.trace()).abs() < 1e-9);
    let below: Vec<f64> = dec.values.iter().zip(&clipped).filter(|(l, _)| **l <= edge).map(|(_, c)| *c).collect();
    assert!(below.len() >= n - 2);
    assert!(below.windows(2).all(|w| w[0] == w[1]));
}

fn random_orthogonal(seed: u64, n: usize) -> DMatrix<f64> {
    let a = gaussian(seed, n, n);
    a.qr().q()
}

#[test]
fn oracle_matches_the_direct_quadratic_form() {
    let n = 6;
    let v_hat = random_orthogonal(21, n);
    let basis = random_orthogonal(22, n);
    let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.2, 0.5, 0.8, 1.0, 1.5, 2.0]));
    let c = &basis * lambda * basis.transpose();
    let o = oracle_eigenvalues(&v_hat, &c).unwrap();
    for k in 0..n {
        let v = v_hat.column(k);
        let direct = (v.transpose() * &c * v)[(0, 0)];
        assert!((o.values[k] - direct).abs() < 1e-12);
        assert!((o.direct[k] - direct).abs() < 1e-12);
    }
    assert!(o.stochastic_error() < 1e-12);
    assert!((o.values.iter().sum::<f64>() - c.trace()).abs() < 1e-12);

    // the population eigenvectors recover the population spectrum
    let own = oracle_eigenvalues(&basis, &c).unwrap();
    for (k, want) in [0.2, 0.5, 0.8, 1.0, 1.5, 2.0].iter().enumerate() {
        assert!((own.values[k] - want).abs() < 1e-12);
    }
}

#[test]
fn inverse_variance_weights() {
    let w = erb_weights(&[1.0, 4.0]).unwrap().w;
    assert!((w[0] - 0.8).abs() < 1e-15 && (w[1] - 0.2).abs() < 1e-15);
}

fn gaussian_store(seed: u64, days: usize, n: usize) -> MarketStore {
    let x = gaussian(seed, days, n) * 0.01;
    let dates = business_days(NaiveDate::from_ymd_opt(2015, 1, 2).unwrap(), days);
    let assets = (0..n).map(|j| format!("A{j:02}")).collect();
    MarketStore::from_panel(&ReturnPanel::new(dates, assets, x).unwrap())
}

#[test]
fn average_oracle_settles_as_samples_grow() {
    let store = gaussian_store(30, 600, 10);
    let table = |samples, seed| calibrate_ao(&store, 0, 600, 10, 40, 20, samples, seed).unwrap().values;
    let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);

    let few = gap(&table(25, 1), &table(25, 2));
    let many = gap(&table(1600, 1), &table(1600, 2));
    assert!(many < 0.35 * few, "{many} vs {few}");

    // every oracle spectrum has the reference trace, so the average does too
    let t = table(400, 3);
    assert!((t.iter().sum::<f64>() - 10.0).abs() < 1e-9);
}
