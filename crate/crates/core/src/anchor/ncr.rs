use super::{AnchorKind, BatchLoss, PairwiseSample, Recommender};
use crate::diffcore::{Graph, ParamStore};
use crate::error::{Error, Result};
use crate::logic::{self, NcrModel, Vars, ITEM_EMB, USER_EMB};

impl Recommender for NcrModel {
    fn kind(&self) -> AnchorKind {
        AnchorKind::Ncr
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

    fn score_candidates(&self, user: usize, history: &[usize], feedback: &[bool], candidates: &[usize]) -> Result<Vec<f64>> {
        NcrModel::score_candidates(self, user, history, feedback, candidates)
    }

    fn batch_loss(&self, g: &mut Graph, vars: &Vars, batch: &[PairwiseSample<'_>]) -> Result<BatchLoss> {
        let b = batch.len();
        let w = batch[0].example.history.len();
        if w == 0 || batch.iter().any(|s| s.example.history.len() != w) {
            return Err(Error::Contract("NCR batches need equal, non-empty history lengths".into()));
        }

        // Rows are position-major: all examples' position 0, then 1, ...,
        // then the positive targets, then the negatives.
        let mut users = Vec::with_capacity((w + 2) * b);
        let mut items = Vec::with_capacity((w + 2) * b);
        let mut feedback = Vec::with_capacity(w * b);
        for t in 0..w {
            for s in batch {
                users.push(s.example.user_id);
                items.push(s.example.history[t]);
                feedback.push(s.example.history_feedback[t]);
            }
        }
        for s in batch {
            users.push(s.example.user_id);
            items.push(s.example.target);
        }
        for s in batch {
            users.push(s.example.user_id);
            items.push(s.negative);
        }

        let u = g.gather_rows(vars.get(USER_EMB)?, &users)?;
        let i = g.gather_rows(vars.get(ITEM_EMB)?, &items)?;
        let events = logic::encode(g, vars, u, i)?;
        let h = g.slice_rows(events, 0, w * b)?;
        let pos = g.slice_rows(events, w * b, b)?;
        let neg = g.slice_rows(events, (w + 1) * b, b)?;

        let (terms, _, nnh) = logic::history_terms(g, vars, h, &feedback)?;
        let acc = logic::fold_or(g, vars, terms, w, b)?;
        let pos_expr = logic::or(g, vars, acc, pos)?;
        let neg_expr = logic::or(g, vars, acc, neg)?;
        let ps = logic::score_rows(g, vars, pos_expr)?;
        let ns = logic::score_rows(g, vars, neg_expr)?;

        let diff = g.sub(ps, ns)?;
        let sharp = g.scale(diff, self.config.beta);
        let ls = g.log_sigmoid(sharp);
        let mean_ls = g.mean(ls)?;
        let ranking = g.scale(mean_ls, -1.0);

        let gap = g.sub(nnh, h)?;
        let gap_sq = g.sum_sq(gap);
        let logic_reg = g.scale(gap_sq, 1.0 / (w * b) as f64);

        let weighted_reg = g.scale(logic_reg, self.config.lambda_logic);
        let mut total = g.add(ranking, weighted_reg)?;
        if self.config.lambda_w > 0.0 {
            for name in self.trainable_names() {
                let sq = g.sum_sq(vars.get(&name)?);
                let wd = g.scale(sq, self.config.lambda_w);
                total = g.add(total, wd)?;
            }
        }
        let ranking_value = g.value(ranking).item();
        let reg_value = g.value(logic_reg).item();
        Ok(BatchLoss {
            total,
            ranking: ranking_value,
            logic_reg: reg_value,
        })
    }
}
