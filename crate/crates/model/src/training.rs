//! Deterministic training loops over an in-memory set of sequences.

use serde::{Deserialize, Serialize};

use crate::config::FreezeSchedule;
use crate::error::{Error, Result};
use crate::model::{argmax, train_step, Transformer};
use crate::sequence::{RhythmConditionGrid, TokenSequence};
use crate::tensor::Scalar;

pub type Example = (TokenSequence, RhythmConditionGrid);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub lr: f64,
    /// Examples per step; step `s` takes batch `s mod n_batches` in corpus order.
    pub batch_size: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            lr: 0.3,
            batch_size: 4,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.batch_size == 0 {
            return Err(Error::Config(format!(
                "lr {} must be positive and batch_size {} at least 1",
                self.lr, self.batch_size
            )));
        }
        Ok(())
    }
}

fn batch_for_step(data: &[Example], batch_size: usize, step: usize) -> &[Example] {
    let n_batches = data.len().div_ceil(batch_size);
    let b = step % n_batches;
    &data[b * batch_size..((b + 1) * batch_size).min(data.len())]
}

/// Runs `steps` SGD steps; returns the loss of every step's batch before its update.
pub fn train<T: Scalar>(
    model: &mut Transformer<T>,
    data: &[Example],
    schedule: &FreezeSchedule,
    options: &TrainOptions,
    steps: usize,
) -> Result<Vec<f64>> {
    options.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyLossMask);
    }
    (0..steps)
        .map(|s| train_step(model, batch_for_step(data, options.batch_size, s), schedule, options.lr))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Mean cross-entropy over every target token.
    pub loss: f64,
    /// Target tokens whose teacher-forced argmax is correct.
    pub correct: usize,
    pub total: usize,
}

impl Evaluation {
    pub fn all_correct(&self) -> bool {
        self.correct == self.total
    }
}

pub fn evaluate<T: Scalar>(model: &Transformer<T>, data: &[Example]) -> Result<Evaluation> {
    let delimiter = model.config().delimiter();
    let mut nll = 0.0;
    let mut correct = 0;
    let mut total = 0;
    for (seq, grid) in data {
        let logits = model.forward_sequence(seq, grid)?;
        let first = seq.delimiter_position();
        for (i, &target) in seq.target_tokens.iter().enumerate() {
            let row = logits.row(first + i);
            correct += (argmax(row, Some(delimiter)) == target) as usize;
            let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
            let lse = row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln() + max;
            nll += lse - row[target as usize].as_f64();
        }
        total += seq.target_tokens.len();
    }
    if total == 0 {
        return Err(Error::EmptyLossMask);
    }
    Ok(Evaluation {
        loss: nll / total as f64,
        correct,
        total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorizationRun {
    pub epochs: usize,
    pub step_losses: Vec<f64>,
    pub final_eval: Evaluation,
    pub converged: bool,
}

/// Trains whole epochs until the full-set loss is below `target_loss` and every target token
/// is predicted correctly under teacher forcing, or `max_epochs` pass.
pub fn train_until_memorized<T: Scalar>(
    model: &mut Transformer<T>,
    data: &[Example],
    schedule: &FreezeSchedule,
    options: &TrainOptions,
    target_loss: f64,
    max_epochs: usize,
) -> Result<MemorizationRun> {
    options.validate()?;
    let per_epoch = data.len().div_ceil(options.batch_size.max(1));
    let mut step_losses = Vec::new();
    let mut final_eval = evaluate(model, data)?;
    for epoch in 1..=max_epochs {
        for s in 0..per_epoch {
            step_losses.push(train_step(
                model,
                batch_for_step(data, options.batch_size, s),
                schedule,
                options.lr,
            )?);
        }
        let recent = step_losses[step_losses.len() - per_epoch..].iter().sum::<f64>() / per_epoch as f64;
        // Full evaluations cost a forward pass per example, so wait until the running loss is close.
        if recent < 2.0 * target_loss || epoch == max_epochs {
            final_eval = evaluate(model, data)?;
            if final_eval.loss < target_loss && final_eval.all_correct() {
                return Ok(MemorizationRun {
                    epochs: epoch,
                    step_losses,
                    final_eval,
                    converged: true,
                });
            }
        }
    }
    Ok(MemorizationRun {
        epochs: max_epochs,
        step_losses,
        final_eval,
        converged: false,
    })
}
