//! A small gated recurrent recommender in the GRU4Rec lineage.
//!
//! Each history step feeds `item_emb[v] + fb_emb[b]` into a gated cell
//!
//! ```text
//! z  = σ(x·Wz + h·Uz + bz)
//! h̃  = tanh(x·Wh + h·Uh + bh)
//! h' = h + z ⊙ (h̃ − h)
//! ```
//!
//! and a candidate is scored by the dot product of `h·Wo + bo` with its
//! item embedding. The additive feedback embedding is what lets the model
//! see a like/dislike flip at all.

use serde::{Deserialize, Serialize};

use super::{AnchorKind, BatchLoss, PairwiseSample, Recommender};
use crate::diffcore::{glorot, uniform_init, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::logic::Vars;
use crate::seed;

const ITEM_EMB: &str = "item_emb";
const FB_EMB: &str = "fb_emb";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentConfig {
    pub n_items: usize,
    pub dim: usize,
    pub lambda_w: f64,
    pub seed: u64,
}

impl RecurrentConfig {
    pub fn new(n_items: usize) -> Self {
        Self {
            n_items,
            dim: crate::logic::DEFAULT_DIM,
            lambda_w: crate::logic::DEFAULT_LAMBDA_W,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentModel {
    pub config: RecurrentConfig,
    pub params: ParamStore,
}

impl RecurrentModel {
    pub fn new(config: RecurrentConfig) -> Result<Self> {
        if config.dim == 0 || config.n_items == 0 {
            return Err(Error::Config("recurrent anchor needs positive dim and items".into()));
        }
        let d = config.dim;
        let mut rng = seed::rng(config.seed, "recurrent-init", 0);
        let mut p = ParamStore::new();
        p.insert(ITEM_EMB, uniform_init(&mut rng, &[config.n_items, d], 0.1));
        p.insert(FB_EMB, uniform_init(&mut rng, &[2, d], 0.1));
        for gate in ["z", "h"] {
            p.insert(&format!("gru_w{gate}"), glorot(&mut rng, d, d));
            p.insert(&format!("gru_u{gate}"), glorot(&mut rng, d, d));
            p.insert(&format!("gru_b{gate}"), Tensor::zeros(&[d]));
        }
        p.insert("out_w", glorot(&mut rng, d, d));
        p.insert("out_b", Tensor::zeros(&[d]));
        Ok(Self { config, params: p })
    }

    pub fn from_parts(config: RecurrentConfig, params: ParamStore) -> Result<Self> {
        for name in [ITEM_EMB, FB_EMB, "gru_wz", "gru_uz", "gru_bz", "gru_wh", "gru_uh", "gru_bh", "out_w", "out_b"] {
            params.require(name)?;
        }
        Ok(Self { config, params })
    }

    fn check_items(&self, items: &[usize]) -> Result<()> {
        match items.iter().find(|&&i| i >= self.config.n_items) {
            Some(&i) => Err(Error::OutOfRange {
                what: "item",
                index: i,
                size: self.config.n_items,
            }),
            None => Ok(()),
        }
    }

    /// Runs the cell over position-major rows (`positions * batch`) and
    /// returns the final `[batch, d]` hidden state.
    fn run(&self, g: &mut Graph, vars: &Vars, items: &[usize], feedback: &[bool], positions: usize, batch: usize) -> Result<Var> {
        self.check_items(items)?;
        let d = self.config.dim;
        let x_items = g.gather_rows(vars.get(ITEM_EMB)?, items)?;
        let fb_idx: Vec<usize> = feedback.iter().map(|&b| b as usize).collect();
        let x_fb = g.gather_rows(vars.get(FB_EMB)?, &fb_idx)?;
        let x_all = g.add(x_items, x_fb)?;
        let mut h = g.constant(Tensor::zeros(&[batch, d]));
        for t in 0..positions {
            let x = g.slice_rows(x_all, t * batch, batch)?;
            let z = gate(g, vars, "z", x, h)?;
            let z = g.sigmoid(z);
            let cand = gate(g, vars, "h", x, h)?;
            let cand = g.tanh(cand);
            let step = g.sub(cand, h)?;
            let step = g.mul(z, step)?;
            h = g.add(h, step)?;
        }
        Ok(h)
    }

    fn project(g: &mut Graph, vars: &Vars, h: Var) -> Result<Var> {
        let o = g.matmul(h, vars.get("out_w")?)?;
        g.add_row_bias(o, vars.get("out_b")?)
    }

    /// Final hidden state for one history.
    pub fn hidden_state(&self, history: &[usize], feedback: &[bool]) -> Result<Vec<f64>> {
        check_history(history, feedback)?;
        let mut g = Graph::new();
        let vars = Vars::new(self.params.register_frozen(&mut g));
        let h = self.run(&mut g, &vars, history, feedback, history.len(), 1)?;
        Ok(g.value(h).data().to_vec())
    }
}

fn gate(g: &mut Graph, vars: &Vars, name: &str, x: Var, h: Var) -> Result<Var> {
    let a = g.matmul(x, vars.get(&format!("gru_w{name}"))?)?;
    let b = g.matmul(h, vars.get(&format!("gru_u{name}"))?)?;
    let s = g.add(a, b)?;
    g.add_row_bias(s, vars.get(&format!("gru_b{name}"))?)
}

fn check_history(history: &[usize], feedback: &[bool]) -> Result<()> {
    if history.is_empty() || history.len() != feedback.len() {
        return Err(Error::Contract(format!(
            "history has {} items and {} feedback bits",
            history.len(),
            feedback.len()
        )));
    }
    Ok(())
}

impl Recommender for RecurrentModel {
    fn kind(&self) -> AnchorKind {
        AnchorKind::Recurrent
    }

    fn n_items(&self) -> usize {
        self.config.n_items
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.config).expect("config serializes")
    }

    fn score_candidates(&self, _user: usize, history: &[usize], feedback: &[bool], candidates: &[usize]) -> Result<Vec<f64>> {
        check_history(history, feedback)?;
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        self.check_items(candidates)?;
        let mut g = Graph::new();
        let vars = Vars::new(self.params.register_frozen(&mut g));
        let h = self.run(&mut g, &vars, history, feedback, history.len(), 1)?;
        let out = Self::project(&mut g, &vars, h)?;
        let out = g.gather_rows(out, &vec![0; candidates.len()])?;
        let cand = g.gather_rows(vars.get(ITEM_EMB)?, candidates)?;
        let s = g.row_dot(out, cand)?;
        Ok(g.value(s).data().to_vec())
    }

    fn batch_loss(&self, g: &mut Graph, vars: &Vars, batch: &[PairwiseSample<'_>]) -> Result<BatchLoss> {
        let b = batch.len();
        let w = batch[0].example.history.len();
        if w == 0 || batch.iter().any(|s| s.example.history.len() != w) {
            return Err(Error::Contract("batches need equal, non-empty history lengths".into()));
        }
        let mut items = Vec::with_capacity(w * b);
        let mut feedback = Vec::with_capacity(w * b);
        for t in 0..w {
            for s in batch {
                items.push(s.example.history[t]);
                feedback.push(s.example.history_feedback[t]);
            }
        }
        let h = self.run(g, vars, &items, &feedback, w, b)?;
        let out = Self::project(g, vars, h)?;
        let pos_ids: Vec<usize> = batch.iter().map(|s| s.example.target).collect();
        let neg_ids: Vec<usize> = batch.iter().map(|s| s.negative).collect();
        self.check_items(&pos_ids)?;
        self.check_items(&neg_ids)?;
        let pos = g.gather_rows(vars.get(ITEM_EMB)?, &pos_ids)?;
        let neg = g.gather_rows(vars.get(ITEM_EMB)?, &neg_ids)?;
        let ps = g.row_dot(out, pos)?;
        let ns = g.row_dot(out, neg)?;
        let diff = g.sub(ps, ns)?;
        let ls = g.log_sigmoid(diff);
        let mean_ls = g.mean(ls)?;
        let ranking = g.scale(mean_ls, -1.0);
        let mut total = ranking;
        if self.config.lambda_w > 0.0 {
            let names: Vec<String> = self.params.names().map(str::to_string).collect();
            for name in names {
                let sq = g.sum_sq(vars.get(&name)?);
                let wd = g.scale(sq, self.config.lambda_w);
                total = g.add(total, wd)?;
            }
        }
        Ok(BatchLoss {
            total,
            ranking: g.value(ranking).item(),
            logic_reg: 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> RecurrentModel {
        let mut cfg = RecurrentConfig::new(10);
        cfg.dim = 6;
        cfg.seed = 3;
        RecurrentModel::new(cfg).unwrap()
    }

    #[test]
    fn feedback_changes_hidden_state() {
        let m = model();
        let a = m.hidden_state(&[1, 2, 3], &[true, true, false]).unwrap();
        let b = m.hidden_state(&[1, 2, 3], &[true, false, false]).unwrap();
        assert_eq!(a.len(), 6);
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn scores_are_order_preserving_per_candidate() {
        let m = model();
        let fwd = m.score_candidates(0, &[1, 2], &[true, false], &[4, 5, 6]).unwrap();
        let rev = m.score_candidates(0, &[1, 2], &[true, false], &[6, 5, 4]).unwrap();
        assert_eq!(fwd[0], rev[2]);
        assert_eq!(fwd[2], rev[0]);
    }

    #[test]
    fn out_of_range_candidate() {
        let m = model();
        assert!(matches!(
            m.score_candidates(0, &[1], &[true], &[10]),
            Err(Error::OutOfRange { .. })
        ));
    }
}
