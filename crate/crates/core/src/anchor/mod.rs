//! Anchor recommenders: the models that are trained on the original data,
//! re-optimized on augmented data, and evaluated.
//!
//! Both implementations share the [`Recommender`] contract and the
//! mini-batch pairwise trainer in [`train_anchor`].

mod ncr;
mod recurrent;
mod train;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::{checkpoint, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::logic::{NcrConfig, NcrModel, Vars};

pub use recurrent::{RecurrentConfig, RecurrentModel};
pub use train::{train_anchor, PairwiseSample, TrainConfig, TrainReport, DEFAULT_BATCH_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorKind {
    Ncr,
    Recurrent,
}

impl AnchorKind {
    pub fn tag(self) -> &'static str {
        match self {
            AnchorKind::Ncr => "ncr",
            AnchorKind::Recurrent => "recurrent",
        }
    }
}

/// Loss terms of one mini-batch.
pub struct BatchLoss {
    pub total: Var,
    pub ranking: f64,
    /// Double-negation regularizer value (0 for models without one).
    pub logic_reg: f64,
}

/// Behavior shared by every anchor model.
pub trait Recommender: Send + Sync {
    fn kind(&self) -> AnchorKind;

    fn n_items(&self) -> usize;

    fn params(&self) -> &ParamStore;

    fn params_mut(&mut self) -> &mut ParamStore;

    /// Model hyper-parameters, embedded in checkpoint headers.
    fn config_json(&self) -> serde_json::Value;

    /// Scores `candidates` given a history. Order of the output follows the
    /// input order.
    fn score_candidates(&self, user: usize, history: &[usize], feedback: &[bool], candidates: &[usize]) -> Result<Vec<f64>>;

    /// Builds the regularized pairwise loss for a batch on `g`, with the
    /// parameters already registered as `vars`.
    #[doc(hidden)]
    fn batch_loss(&self, g: &mut Graph, vars: &Vars, batch: &[PairwiseSample<'_>]) -> Result<BatchLoss>;

    fn score(&self, user: usize, history: &[usize], feedback: &[bool], item: usize) -> Result<f64> {
        Ok(self.score_candidates(user, history, feedback, &[item])?[0])
    }

    fn checkpoint_bytes(&self) -> Result<Vec<u8>> {
        checkpoint::encode(self.kind().tag(), self.config_json(), self.params())
    }
}

/// Loss values of one batch and the gradient of the total.
#[derive(Clone, Debug)]
pub struct BatchGradients {
    pub loss: f64,
    pub ranking: f64,
    pub logic_reg: f64,
    /// One entry per trainable parameter.
    pub grads: BTreeMap<String, Tensor>,
}

/// Evaluates the batch loss and backpropagates it. Parameters are not
/// updated.
pub fn batch_gradients<R: Recommender + ?Sized>(model: &R, batch: &[PairwiseSample<'_>]) -> Result<BatchGradients> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let mut g = Graph::new();
    let vars = Vars::new(model.params().register(&mut g));
    let parts = model.batch_loss(&mut g, &vars, batch)?;
    let grads = g.backward(parts.total)?;
    Ok(BatchGradients {
        loss: g.value(parts.total).item(),
        ranking: parts.ranking,
        logic_reg: parts.logic_reg,
        grads: grads.params(),
    })
}

/// Sorts by descending score, ties by ascending item id.
pub fn order_by_score(mut scored: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    scored
}

/// Full ranking of `candidates` (deduplicated) for a history.
pub fn rank_all<R: Recommender + ?Sized>(
    model: &R,
    user: usize,
    history: &[usize],
    feedback: &[bool],
    candidates: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let mut unique = candidates.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let scores = model.score_candidates(user, history, feedback, &unique)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Domain {
            op: "rank",
            reason: "non-finite score".into(),
        });
    }
    Ok(order_by_score(unique.into_iter().zip(scores).collect()))
}

/// The `k` highest-scoring candidates.
pub fn rank_top_k<R: Recommender + ?Sized>(
    model: &R,
    user: usize,
    history: &[usize],
    feedback: &[bool],
    candidates: &[usize],
    k: usize,
) -> Result<Vec<usize>> {
    if k > candidates.len() {
        return Err(Error::Contract(format!(
            "top-{k} requested from {} candidates",
            candidates.len()
        )));
    }
    let ranked = rank_all(model, user, history, feedback, candidates)?;
    Ok(ranked.into_iter().take(k).map(|(i, _)| i).collect())
}

/// Either anchor implementation, as loaded from a checkpoint.
#[derive(Clone, Debug)]
pub enum AnchorModel {
    Ncr(NcrModel),
    Recurrent(RecurrentModel),
}

impl AnchorModel {
    pub fn as_ncr(&self) -> Option<&NcrModel> {
        match self {
            AnchorModel::Ncr(m) => Some(m),
            AnchorModel::Recurrent(_) => None,
        }
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, params) = checkpoint::decode(bytes)?;
        match header.model_kind.as_str() {
            "ncr" => {
                let cfg: NcrConfig = serde_json::from_value(header.config)?;
                Ok(AnchorModel::Ncr(NcrModel::from_parts(cfg, params)?))
            }
            "recurrent" => {
                let cfg: RecurrentConfig = serde_json::from_value(header.config)?;
                Ok(AnchorModel::Recurrent(RecurrentModel::from_parts(cfg, params)?))
            }
            other => Err(Error::Checkpoint(format!("unknown model kind `{other}`"))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }

    /// Writes the checkpoint and returns its SHA-256.
    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.checkpoint_bytes()?;
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(checkpoint::checksum(&bytes))
    }

    pub fn checksum(&self) -> Result<String> {
        Ok(checkpoint::checksum(&self.checkpoint_bytes()?))
    }
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            AnchorModel::Ncr($m) => $e,
            AnchorModel::Recurrent($m) => $e,
        }
    };
}

impl Recommender for AnchorModel {
    fn kind(&self) -> AnchorKind {
        dispatch!(self, m => m.kind())
    }

    fn n_items(&self) -> usize {
        dispatch!(self, m => m.n_items())
    }

    fn params(&self) -> &ParamStore {
        dispatch!(self, m => m.params())
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        dispatch!(self, m => m.params_mut())
    }

    fn config_json(&self) -> serde_json::Value {
        dispatch!(self, m => m.config_json())
    }

    fn score_candidates(&self, user: usize, history: &[usize], feedback: &[bool], candidates: &[usize]) -> Result<Vec<f64>> {
        dispatch!(self, m => m.score_candidates(user, history, feedback, candidates))
    }

    fn batch_loss(&self, g: &mut Graph, vars: &Vars, batch: &[PairwiseSample<'_>]) -> Result<BatchLoss> {
        dispatch!(self, m => m.batch_loss(g, vars, batch))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_breaks_ties_by_item_id() {
        let ranked = order_by_score(vec![(5, 0.5), (2, 0.9), (3, 0.5), (1, 0.1)]);
        let ids: Vec<usize> = ranked.iter().map(|r| r.0).collect();
        assert_eq!(ids, vec![2, 3, 5, 1]);
    }

    #[test]
    fn top_k_bounds() {
        let mut cfg = NcrConfig::new(2, 8);
        cfg.dim = 4;
        let m = AnchorModel::Ncr(NcrModel::new(cfg).unwrap());
        let cands = [1, 2, 3, 4];
        let full = rank_top_k(&m, 0, &[5], &[true], &cands, 4).unwrap();
        assert_eq!(full.len(), 4);
        let ranked = rank_all(&m, 0, &[5], &[true], &cands).unwrap();
        assert_eq!(rank_top_k(&m, 0, &[5], &[true], &cands, 1).unwrap(), vec![ranked[0].0]);
        assert!(matches!(rank_top_k(&m, 0, &[5], &[true], &cands, 5), Err(Error::Contract(_))));
    }

    #[test]
    fn checkpoint_round_trip_for_both_kinds() {
        let mut cfg = NcrConfig::new(3, 6);
        cfg.dim = 4;
        let ncr = AnchorModel::Ncr(NcrModel::new(cfg).unwrap());
        let rec = AnchorModel::Recurrent(RecurrentModel::new(RecurrentConfig::new(6)).unwrap());
        for m in [ncr, rec] {
            let bytes = m.checkpoint_bytes().unwrap();
            let back = AnchorModel::from_checkpoint_bytes(&bytes).unwrap();
            assert_eq!(back.kind(), m.kind());
            assert_eq!(back.params(), m.params());
            assert_eq!(
                back.score_candidates(1, &[0, 2], &[true, false], &[3, 4]).unwrap(),
                m.score_candidates(1, &[0, 2], &[true, false], &[3, 4]).unwrap()
            );
        }
    }
}
