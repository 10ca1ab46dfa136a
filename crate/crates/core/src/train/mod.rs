//! Training loop: per-sample tapes, summed gradients, Adam with a per-batch
//! exponential learning-rate decay, and held-out validation curves.

mod checkpoint;
mod sample;

pub use checkpoint::{Checkpoint, CheckpointMeta, MAGIC, VERSION};
pub use sample::{draw_sample, feasible_decisions, TrainSample};

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Adam, AdamConfig, Tape, Tensor};
use crate::error::{Error, Result};
use crate::gmv;
use crate::lag;
use crate::model::{self, ModelParams, ModelVars};
use crate::panel::MarketStore;
use crate::rng::{self, streams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dt_in: usize,
    pub dt_out: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// The rate is multiplied by `decay_factor` every `decay_interval` batches,
    /// applied smoothly per batch.
    pub decay_factor: f64,
    pub decay_interval: f64,
    /// Global gradient-norm cap; non-positive disables clipping.
    pub clip_norm: f64,
    pub omega: usize,
    pub seed: u64,
    /// Inclusive row span the samples are drawn from.
    pub calibration_start: usize,
    pub calibration_end: usize,
    /// Trailing rows of the span reserved for validation decisions.
    pub validation_days: usize,
    pub validation_samples: usize,
    /// Evaluate batch samples on the rayon pool. Results are identical either way.
    pub parallel: bool,
}

impl TrainConfig {
    pub fn paper() -> Self {
        Self {
            dt_in: 1200,
            dt_out: 5,
            n_min: 50,
            n_max: 350,
            epochs: 100,
            steps_per_epoch: 500,
            batch_size: 32,
            learning_rate: 1e-4,
            decay_factor: 0.99,
            decay_interval: 500.0,
            clip_norm: 1.0,
            omega: 64,
            seed: 0,
            calibration_start: 0,
            calibration_end: 0,
            validation_days: 252,
            validation_samples: 64,
            parallel: true,
        }
    }

    /// Short windows and small baskets that train in minutes on a laptop.
    pub fn desk() -> Self {
        Self {
            dt_in: 120,
            n_min: 20,
            n_max: 60,
            epochs: 3,
            steps_per_epoch: 50,
            learning_rate: 1e-3,
            validation_samples: 32,
            ..Self::paper()
        }
    }

    pub fn learning_rate_at(&self, batch: usize) -> f64 {
        self.learning_rate * self.decay_factor.powf(batch as f64 / self.decay_interval)
    }

    /// SHA-256 of the JSON form, hex encoded. The threading switch does not
    /// change results and is left out.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&Self { parallel: false, ..self.clone() }).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.dt_in < 2 || self.dt_out == 0 {
            return bad(format!("window lengths dt_in={} dt_out={}", self.dt_in, self.dt_out));
        }
        if self.n_min < 2 || self.n_min > self.n_max {
            return bad(format!("asset range [{}, {}]", self.n_min, self.n_max));
        }
        if self.batch_size == 0 || self.omega == 0 {
            return bad("batch size and hidden width must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !(self.decay_factor > 0.0) || !(self.decay_interval > 0.0) {
            return bad("learning-rate schedule must be positive".into());
        }
        if self.calibration_end <= self.calibration_start {
            return bad("empty calibration span".into());
        }
        Ok(())
    }

    fn spans(&self) -> Result<((usize, usize), Option<(usize, usize)>)> {
        let (start, end) = (self.calibration_start, self.calibration_end);
        if self.validation_days == 0 || self.validation_samples == 0 {
            return Ok(((start, end), None));
        }
        let split = end
            .checked_sub(self.validation_days)
            .filter(|&s| s > start)
            .ok_or_else(|| Error::InfeasibleSpan(format!("no room for {} validation days", self.validation_days)))?;
        // validation decisions fall in the final rows; their inputs may reach back
        let val_first = (split + 1).saturating_sub(self.dt_in + 1).max(start);
        Ok(((start, split), Some((val_first, end))))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub validation: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochLoss>,
    pub skipped_samples: usize,
    pub rejected_steps: usize,
}

/// Loss and parameter gradients of one sample.
pub fn sample_gradient(params: &ModelParams, s: &TrainSample) -> Result<(f64, Vec<Tensor>)> {
    let tape = Tape::new();
    let leaves: Vec<_> = params.tensors().into_iter().map(|t| tape.param(t.clone())).collect();
    let vars = ModelVars::from_slice(&leaves)?;
    let loss = model::sample_loss(&tape, &vars, lag::lag_major(&s.window), Tensor::from_dmatrix(&s.r_out))?;
    let value = loss.item();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss at row {}", s.t)));
    }
    let grads = tape.backward(loss)?;
    Ok((value, leaves.iter().map(|&v| grads.get_or_zeros(v)).collect()))
}

/// Mean out-of-sample loss of the model's weights over `samples`.
pub fn evaluate(params: &ModelParams, samples: &[TrainSample]) -> Result<f64> {
    let losses: Vec<f64> = samples.par_iter().map(|s| params.weights(&s.window).map(|w| gmv::loss(&w, &s.r_out))).collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

fn draw_many(store: &MarketStore, cfg: &TrainConfig, span: (usize, usize), count: usize, r: &mut rng::Rng) -> Result<Vec<TrainSample>> {
    (0..count).map(|_| draw_sample(store, span, cfg.dt_in, cfg.dt_out, (cfg.n_min, cfg.n_max), r)).collect()
}

pub fn train(store: &MarketStore, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.calibration_end >= store.n_days() {
        return Err(Error::InfeasibleSpan(format!(
            "calibration ends at row {} but the store has {} days",
            cfg.calibration_end,
            store.n_days()
        )));
    }
    let (train_span, val_span) = cfg.spans()?;
    let validation = match val_span {
        Some(span) => {
            let mut r = rng::stream(cfg.seed, streams::VALIDATION);
            draw_many(store, cfg, span, cfg.validation_samples, &mut r)?
        }
        None => Vec::new(),
    };

    let mut params = ModelParams::init(cfg.dt_in, cfg.omega, cfg.seed)?;
    let mut tensors = params.to_tensors();
    let mut adam = Adam::new(&tensors, AdamConfig::default());
    let mut sampler = rng::stream(cfg.seed, streams::TRAIN_SAMPLES);
    let clip = (cfg.clip_norm > 0.0).then_some(cfg.clip_norm);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut skipped = 0;
    let mut rejected = 0;
    let mut batch_index = 0;
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0;
        for _ in 0..cfg.steps_per_epoch {
            let batch = draw_many(store, cfg, train_span, cfg.batch_size, &mut sampler)?;
            let results: Vec<Result<(f64, Vec<Tensor>)>> = if cfg.parallel {
                batch.par_iter().map(|s| sample_gradient(&params, s)).collect()
            } else {
                batch.iter().map(|s| sample_gradient(&params, s)).collect()
            };

            let mut sum: Option<Vec<Tensor>> = None;
            let mut loss = 0.0;
            let mut kept = 0usize;
            for (s, res) in batch.iter().zip(results) {
                match res {
                    Ok((l, g)) => {
                        loss += l;
                        kept += 1;
                        match &mut sum {
                            None => sum = Some(g),
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| add_into(a, b)),
                        }
                    }
                    Err(e) => {
                        warn!("skipping sample at row {} (n={}): {e}", s.t, s.n());
                        skipped += 1;
                    }
                }
            }
            let lr = cfg.learning_rate_at(batch_index);
            batch_index += 1;
            let Some(mut grads) = sum else { continue };
            let inv = 1.0 / kept as f64;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|x| *x *= inv);
            }
            let outcome = adam.step(&mut tensors, &grads, lr, clip)?;
            if !outcome.applied {
                warn!("rejected step {batch_index}: gradient norm {}", outcome.grad_norm);
                rejected += 1;
                continue;
            }
            params = ModelParams::from_tensors(cfg.dt_in, cfg.omega, tensors.clone())?;
            loss *= inv;
            debug!("batch {batch_index}: loss {loss:.6e} lr {lr:.3e} |g| {:.3e}", outcome.grad_norm);
            epoch_loss += loss;
            epoch_batches += 1;
        }
        let train_loss = if epoch_batches > 0 { epoch_loss / epoch_batches as f64 } else { f64::NAN };
        let val_loss = if validation.is_empty() { None } else { Some(evaluate(&params, &validation)?) };
        match val_loss {
            Some(v) => info!("epoch {}: train {train_loss:.6e}, validation {v:.6e}", epoch + 1),
            None => info!("epoch {}: train {train_loss:.6e}", epoch + 1),
        }
        history.push(EpochLoss { epoch: epoch + 1, train: train_loss, validation: val_loss });
    }

    let end_date = store.dates()[cfg.calibration_end].to_string();
    let checkpoint = Checkpoint::new(params, cfg.hash(), end_date, cfg.seed, cfg.epochs);
    Ok(TrainOutcome { checkpoint, history, skipped_samples: skipped, rejected_steps: rejected })
}

fn add_into(acc: &mut Tensor, g: &Tensor) {
    acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
}
