//! Adam training with early stopping, resumable checkpoints, and evaluation.

mod adam;
mod checkpoint;

pub use adam::{adam_step, adam_step_with_lr, AdamState, TrainConfig};
pub use checkpoint::{Checkpoint, CheckpointError};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::forge::MixRecord;
use crate::kernel::Tensor;
use crate::metrics::{MetricError, MetricReport, PsdParams, SegmentScores};
use crate::model::{DtpNet, ModelError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite gradient in parameter {param}")]
    NonFiniteGradient { param: usize },
    #[error("training diverged at epoch {epoch}, step {step}")]
    Diverged {
        epoch: usize,
        step: u64,
        /// State at the end of the last completed epoch.
        last_good: Box<Checkpoint>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopped,
    StepBudget,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub stop: StopReason,
}

impl TrainOutcome {
    pub fn history(&self) -> &[EpochRecord] {
        &self.checkpoint.history
    }
}

/// Called after every epoch with the record and the current model.
pub type EpochHook<'a> = dyn FnMut(&EpochRecord, &DtpNet<f32>) + 'a;

/// Trains a fresh run from `model`'s current weights.
pub fn train(
    model: &DtpNet<f32>,
    train_set: &[MixRecord],
    val_set: &[MixRecord],
    config: &TrainConfig,
    hook: &mut EpochHook<'_>,
) -> Result<TrainOutcome, TrainError> {
    resume(Checkpoint::initial(model, config), train_set, val_set, config, hook)
}

fn shuffled(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Mean loss and mean gradient over `batch`, reduced in index order so the
/// result does not depend on thread scheduling.
fn batch_gradient(model: &DtpNet<f32>, batch: &[&MixRecord]) -> Result<(f64, Vec<Tensor<f32>>), TrainError> {
    let per_sample = batch
        .par_iter()
        .map(|r| model.loss_and_grads(&r.contaminated.samples, &r.clean.samples))
        .collect::<Result<Vec<_>, _>>()?;
    let n = per_sample.len() as f64;
    let loss = per_sample.iter().map(|(l, _)| l).sum::<f64>() / n;
    let params = model.params();
    let grads = params
        .iter()
        .enumerate()
        .map(|(p, w)| {
            let mut acc = vec![0.0f64; w.len()];
            for (_, g) in &per_sample {
                for (a, &v) in acc.iter_mut().zip(g[p].data()) {
                    *a += v as f64;
                }
            }
            let data = acc.into_iter().map(|a| (a / n) as f32).collect();
            Tensor::new(w.shape(), data).expect("same shape")
        })
        .collect();
    Ok((loss, grads))
}

fn clip(grads: &mut [Tensor<f32>], max_norm: f64) {
    let norm = grads.iter().map(|g| g.norm_sq()).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = (max_norm / norm) as f32;
        grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|v| *v *= s));
    }
}

/// Mean per-segment MSE, accumulated in 64 bits.
pub fn validation_loss(model: &DtpNet<f32>, records: &[MixRecord]) -> Result<f64, TrainError> {
    let losses = records
        .par_iter()
        .map(|r| {
            let out = model.forward(&Tensor::signal(&r.contaminated.samples))?;
            let se = out
                .data()
                .iter()
                .zip(&r.clean.samples)
                .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                .sum::<f64>();
            Ok(se / r.clean.len() as f64)
        })
        .collect::<Result<Vec<f64>, ModelError>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Continues training from `state`. `config` replaces the stored training
/// config, which allows extending `max_epochs` on resume.
pub fn resume(
    mut state: Checkpoint,
    train_set: &[MixRecord],
    val_set: &[MixRecord],
    config: &TrainConfig,
    hook: &mut EpochHook<'_>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySplit("val"));
    }
    state.train = config.clone();
    let mut model = state.current_model()?;
    let out_of_steps = |s: &Checkpoint| config.max_steps.is_some_and(|m| s.adam.t >= m);

    if state.epochs_since_improvement >= config.patience {
        return Ok(TrainOutcome {
            checkpoint: state,
            stop: StopReason::EarlyStopped,
        });
    }
    while state.epoch < config.max_epochs {
        if out_of_steps(&state) {
            return Ok(TrainOutcome {
                checkpoint: state,
                stop: StopReason::StepBudget,
            });
        }
        let last_good = state.clone();
        let epoch = state.epoch + 1;
        let order = shuffled(train_set.len(), config.seed, epoch);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&MixRecord> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, mut grads) = batch_gradient(&model, &batch)?;
            let diverged = |state: &Checkpoint| TrainError::Diverged {
                epoch,
                step: state.adam.t + 1,
                last_good: Box::new(last_good.clone()),
            };
            if !loss.is_finite() {
                return Err(diverged(&state));
            }
            if let Some(c) = config.grad_clip {
                clip(&mut grads, c);
            }
            match adam_step(&mut model.params_mut(), &grads, &mut state.adam, config) {
                Ok(()) => {}
                Err(TrainError::NonFiniteGradient { .. }) => return Err(diverged(&state)),
                Err(e) => return Err(e),
            }
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
            if out_of_steps(&state) {
                break;
            }
        }
        state.weights = model.params().into_iter().cloned().collect();
        let val_loss = validation_loss(&model, val_set)?;
        if !val_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                step: state.adam.t,
                last_good: Box::new(last_good),
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_loss,
        };
        state.epoch = epoch;
        state.history.push(record);
        if val_loss < state.best_val_loss {
            state.best_val_loss = val_loss;
            state.best = Some(state.weights.clone());
            state.epochs_since_improvement = 0;
        } else {
            state.epochs_since_improvement += 1;
        }
        hook(&record, &model);
        if state.epochs_since_improvement >= config.patience {
            return Ok(TrainOutcome {
                checkpoint: state,
                stop: StopReason::EarlyStopped,
            });
        }
    }
    let stop = if out_of_steps(&state) {
        StopReason::StepBudget
    } else {
        StopReason::MaxEpochs
    };
    Ok(TrainOutcome { checkpoint: state, stop })
}

/// Scores `denoise(record)` for every record and groups by input SNR level.
pub fn evaluate_with<D>(records: &[MixRecord], psd: &PsdParams, denoise: D) -> Result<MetricReport, TrainError>
where
    D: Fn(&MixRecord) -> Result<Vec<f64>, TrainError> + Sync,
{
    let scores = records
        .par_iter()
        .map(|r| {
            let out = denoise(r)?;
            let fs = r.clean.fs as f64;
            Ok(SegmentScores::compute(
                &r.clean.to_f64(),
                &r.contaminated.to_f64(),
                &out,
                fs,
                psd,
            )?)
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let levels: Vec<i32> = records.iter().map(|r| r.snr_level()).collect();
    Ok(MetricReport::from_scores(&scores, &levels)?)
}

pub fn evaluate(model: &DtpNet<f32>, records: &[MixRecord], psd: &PsdParams) -> Result<MetricReport, TrainError> {
    evaluate_with(records, psd, |r| {
        let out = model.denoise_any_length(&r.contaminated.samples)?;
        Ok(out.into_iter().map(|v| v as f64).collect())
    })
}
