//! Weight rules evaluated at a decision date: the learned pipeline, every
//! classical cleaner reassembled as `D C D`, and the two univariate rules.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimators::{self, AoTable};
use crate::gmv::{self, Constraint, PortfolioWeights, QpOptions};
use crate::linalg;
use crate::model::ModelParams;

#[derive(Clone, Debug)]
pub enum Strategy {
    Nn(Arc<ModelParams>),
    Mle,
    Ls,
    Qis,
    Pm {
        gamma: f64,
    },
    Clip,
    Ao(Arc<Vec<AoTable>>),
    /// Oracle cleaning against a known population covariance over every
    /// asset of the store; only meaningful on synthetic data.
    Oracle(Arc<DMatrix<f64>>),
    Erb,
    Mcw,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Strategy::Nn(_) => "NN",
            Strategy::Mle => "MLE",
            Strategy::Ls => "LS",
            Strategy::Qis => "QIS",
            Strategy::Pm { .. } => "PM",
            Strategy::Clip => "CLIP",
            Strategy::Ao(_) => "AO",
            Strategy::Oracle(_) => "ORACLE",
            Strategy::Erb => "ERB",
            Strategy::Mcw => "MCW",
        };
        f.write_str(s)
    }
}

/// What a strategy may see at a decision date.
pub struct DecisionInput<'a> {
    /// Chronological `[Δt_in, n]` returns ending the day before the decision.
    pub window: &'a DMatrix<f64>,
    /// Store column of each window column.
    pub assets: &'a [usize],
    /// Market caps quoted the day before the decision.
    pub caps: Option<&'a [f64]>,
}

impl Strategy {
    /// Parses a classical tag; `NN`, `AO` and `ORACLE` need data and are
    /// built directly.
    pub fn from_tag(tag: &str, pm_gamma: f64) -> Result<Self> {
        Ok(match tag.to_ascii_uppercase().as_str() {
            "MLE" => Strategy::Mle,
            "LS" => Strategy::Ls,
            "QIS" => Strategy::Qis,
            "PM" => Strategy::Pm { gamma: pm_gamma },
            "CLIP" => Strategy::Clip,
            "ERB" => Strategy::Erb,
            "MCW" => Strategy::Mcw,
            other => return Err(Error::InvalidInput(format!("unknown strategy {other:?}"))),
        })
    }

    /// Cleaned covariance `D C D` for covariance-based rules.
    pub fn covariance(&self, input: &DecisionInput<'_>) -> Result<DMatrix<f64>> {
        let x = input.window;
        let (t, n) = x.shape();
        if let Strategy::Nn(model) = self {
            return model.predict(x)?.covariance();
        }
        let (_, std) = linalg::column_moments(x);
        let (c, dec) = gmv::sample_correlation(x)?;
        let q = n as f64 / t as f64;
        let rie = |f: Vec<f64>| linalg::to_unit_diagonal(&dec.reassemble(&f));
        let cleaned = match self {
            Strategy::Mle => estimators::clean_mle(&c),
            Strategy::Ls => {
                let z = standardized(x, &std);
                linalg::to_unit_diagonal(&estimators::ledoit_wolf(&z)?.covariance)?
            }
            Strategy::Qis => rie(estimators::qis(&dec.values, q)?)?,
            Strategy::Pm { gamma } => estimators::power_map(&c, *gamma)?,
            Strategy::Clip => rie(estimators::clip_eigenvalues(&dec.values, estimators::marchenko_pastur_edge(q)))?,
            Strategy::Ao(tables) => rie(AoTable::find(tables, n, t)?.clean(&dec.values, t)?)?,
            Strategy::Oracle(pop) => {
                let sub = DMatrix::from_fn(n, n, |i, j| pop[(input.assets[i], input.assets[j])]);
                let c_pop = linalg::to_unit_diagonal(&sub)?;
                rie(estimators::oracle_eigenvalues(&dec.vectors, &c_pop)?.values)?
            }
            Strategy::Erb | Strategy::Mcw => return Err(Error::InvalidInput(format!("{self} does not estimate a covariance"))),
            Strategy::Nn(_) => unreachable!(),
        };
        Ok(DMatrix::from_fn(n, n, |i, j| std[i] * cleaned[(i, j)] * std[j]))
    }

    pub fn weights(&self, input: &DecisionInput<'_>, constraint: Constraint) -> Result<PortfolioWeights> {
        let (_, n) = input.window.shape();
        if input.assets.len() != n {
            return Err(Error::Shape(format!("{} asset ids for {n} columns", input.assets.len())));
        }
        match self {
            Strategy::Erb => {
                let (_, std) = linalg::column_moments(input.window);
                estimators::erb_weights(&std.iter().map(|s| s * s).collect::<Vec<_>>())
            }
            Strategy::Mcw => {
                let caps = input.caps.ok_or_else(|| Error::MissingData("market caps".into()))?;
                estimators::mcw_weights(caps)
            }
            Strategy::Nn(model) if constraint == Constraint::Unconstrained => {
                let w = model.weights(input.window)?;
                Ok(PortfolioWeights { w, constraint })
            }
            _ => {
                let sigma = self.covariance(input)?;
                match constraint {
                    Constraint::Unconstrained => gmv::gmv_weights_from_covariance(&sigma),
                    Constraint::LongOnly => Ok(gmv::gmv_weights_longonly(&sigma, QpOptions::default())?.weights),
                }
            }
        }
    }
}

fn standardized(x: &DMatrix<f64>, std: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] / std[j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn window(t: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::stream(seed, 0);
        let common: Vec<f64> = (0..t).map(|_| r.random_range(-0.01..0.01)).collect();
        DMatrix::from_fn(t, n, |i, j| common[i] + (1.0 + j as f64 * 0.2) * r.random_range(-0.01..0.01))
    }

    #[test]
    fn every_cleaner_gives_psd_covariance_and_budget() {
        let x = window(120, 8, 1);
        let assets: Vec<usize> = (0..8).collect();
        let caps = vec![1.0; 8];
        let pop = Arc::new(DMatrix::from_fn(8, 8, |i, j| if i == j { 1.0 } else { 0.3 }));
        let table = AoTable::from_oracle_samples(120, String::new(), &[vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 2.4]]).unwrap();
        let all = [
            Strategy::Mle,
            Strategy::Ls,
            Strategy::Qis,
            Strategy::Pm { gamma: 1.5 },
            Strategy::Clip,
            Strategy::Ao(Arc::new(vec![table])),
            Strategy::Oracle(pop),
            Strategy::Nn(Arc::new(ModelParams::init(120, 4, 0).unwrap())),
        ];
        let input = DecisionInput { window: &x, assets: &assets, caps: Some(&caps) };
        for s in &all {
            let sigma = s.covariance(&input).unwrap();
            assert!(linalg::eigh(&sigma).unwrap().values[0] > 0.0, "{s}");
            for c in [Constraint::Unconstrained, Constraint::LongOnly] {
                let w = s.weights(&input, c).unwrap();
                assert!((w.w.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{s}");
                if c == Constraint::LongOnly {
                    assert!(w.w.iter().all(|&v| v >= 0.0), "{s}");
                }
            }
        }
    }

    #[test]
    fn nn_precision_reproduces_pipeline_weights() {
        let x = window(60, 5, 2);
        let model = ModelParams::init(60, 4, 9).unwrap();
        let p = model.predict(&x).unwrap();
        let w = gmv::gmv_weights(&p.precision().unwrap()).unwrap().w;
        for (a, b) in w.iter().zip(&p.weights) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn mle_matches_direct_solve() {
        let x = window(80, 3, 3);
        let assets = [0, 1, 2];
        let input = DecisionInput { window: &x, assets: &assets, caps: None };
        let w = Strategy::Mle.weights(&input, Constraint::Unconstrained).unwrap().w;
        let (means, _) = linalg::column_moments(&x);
        let xc = DMatrix::from_fn(80, 3, |i, j| x[(i, j)] - means[j]);
        let s = xc.transpose() * &xc / 80.0;
        let direct = gmv::gmv_weights_from_covariance(&s).unwrap().w;
        for (a, b) in w.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
