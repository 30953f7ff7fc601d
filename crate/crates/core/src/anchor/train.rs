use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{batch_gradients, Recommender};
use crate::data::TrainingExample;
use crate::diffcore::{adam_step, AdamState};
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_BATCH_SIZE: usize = 128;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Sampled negatives per positive example.
    pub negatives: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            epochs: 20,
            batch_size: DEFAULT_BATCH_SIZE,
            negatives: 1,
            seed: 0,
        }
    }
}

/// One positive example paired with a sampled negative item.
#[derive(Clone, Copy, Debug)]
pub struct PairwiseSample<'a> {
    pub example: &'a TrainingExample,
    pub negative: usize,
}

/// Per-epoch means over mini-batches.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss: Vec<f64>,
    pub ranking: Vec<f64>,
    pub logic_reg: Vec<f64>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,ranking_loss,logic_reg\n");
        for e in 0..self.loss.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e + 1,
                self.loss[e],
                self.ranking[e],
                self.logic_reg[e]
            ));
        }
        out
    }
}

/// Mini-batch Adam training on the pairwise ranking loss. Counterfactual and
/// original examples are weighted the same. Training continues from the
/// model's current parameters.
pub fn train_anchor<R: Recommender + ?Sized>(
    model: &mut R,
    examples: &[TrainingExample],
    config: &TrainConfig,
) -> Result<TrainReport> {
    if examples.is_empty() {
        return Err(Error::Contract("no training examples".into()));
    }
    if config.batch_size == 0 || config.negatives == 0 || !(config.lr > 0.0) {
        return Err(Error::Config("batch size, negatives and lr must be positive".into()));
    }
    let n_items = model.n_items();
    if n_items < 2 {
        return Err(Error::Config("need at least two items to sample negatives".into()));
    }
    let w = examples[0].history.len();
    if let Some(bad) = examples.iter().position(|e| e.history.len() != w) {
        return Err(Error::Contract(format!(
            "example {bad} has history length {}, expected {w}",
            examples[bad].history.len()
        )));
    }

    let mut state = AdamState::new();
    let mut report = TrainReport::default();
    for epoch in 0..config.epochs {
        let mut rng = seed::rng(config.seed, "train-epoch", epoch as u64);
        let mut samples: Vec<PairwiseSample<'_>> = Vec::with_capacity(examples.len() * config.negatives);
        for ex in examples {
            for _ in 0..config.negatives {
                let negative = loop {
                    let c = rng.gen_range(0..n_items);
                    if c != ex.target {
                        break c;
                    }
                };
                samples.push(PairwiseSample { example: ex, negative });
            }
        }
        samples.shuffle(&mut rng);

        let (mut loss, mut ranking, mut reg) = (0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for batch in samples.chunks(config.batch_size) {
            let step = batch_gradients(&*model, batch)?;
            if !step.loss.is_finite() {
                return Err(Error::Domain {
                    op: "train_anchor",
                    reason: format!("non-finite loss in epoch {}", epoch + 1),
                });
            }
            adam_step(model.params_mut(), &step.grads, &mut state, config.lr)?;
            loss += step.loss;
            ranking += step.ranking;
            reg += step.logic_reg;
            batches += 1;
        }
        let b = batches as f64;
        report.loss.push(loss / b);
        report.ranking.push(ranking / b);
        report.logic_reg.push(reg / b);
    }
    Ok(report)
}
