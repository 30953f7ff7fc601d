//! Ranking evaluation under the sampled 101-candidate protocol: the held-out
//! target is ranked against 100 items the user never interacted with.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchor::{rank_all, Recommender};
use crate::data::{HeldOut, UserSequence};
use crate::error::{Error, Result};
use crate::seed;

pub const N_SAMPLED_NEGATIVES: usize = 100;
pub const DEFAULT_KS: [usize; 2] = [5, 10];

/// Every item each user interacted with, across all splits.
pub type UserItems = BTreeMap<usize, BTreeSet<usize>>;

pub fn interacted_items(sequences: &[UserSequence]) -> UserItems {
    sequences
        .iter()
        .map(|s| (s.user_id, s.items.iter().copied().collect()))
        .collect()
}

/// The target followed by 100 items drawn uniformly without replacement
/// from those the user never touched. Deterministic per `(seed, user)`.
pub fn build_eval_candidates(
    user: usize,
    target: usize,
    interacted: &BTreeSet<usize>,
    n_items: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let pool: Vec<usize> = (0..n_items).filter(|i| *i != target && !interacted.contains(i)).collect();
    if pool.len() < N_SAMPLED_NEGATIVES {
        return Err(Error::Config(format!(
            "user {user} has only {} never-interacted items; {N_SAMPLED_NEGATIVES} are needed",
            pool.len()
        )));
    }
    let mut rng = seed::rng(seed, "eval-candidates", user as u64);
    let mut out = Vec::with_capacity(N_SAMPLED_NEGATIVES + 1);
    out.push(target);
    out.extend(sample(&mut rng, pool.len(), N_SAMPLED_NEGATIVES).into_iter().map(|i| pool[i]));
    Ok(out)
}

/// NDCG@K and HR@K for one ranked list with a single relevant item.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub ndcg: BTreeMap<usize, f64>,
    pub hr: BTreeMap<usize, f64>,
}

pub fn ndcg_hr(ranked: &[usize], target: usize, ks: &[usize]) -> Result<MetricValues> {
    let r = ranked
        .iter()
        .position(|&i| i == target)
        .ok_or_else(|| Error::Contract(format!("target {target} absent from ranked list")))?
        + 1;
    let mut out = MetricValues::default();
    for &k in ks {
        let hit = r <= k;
        out.hr.insert(k, if hit { 1.0 } else { 0.0 });
        out.ndcg.insert(k, if hit { 1.0 / ((r + 1) as f64).log2() } else { 0.0 });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub ndcg: BTreeMap<usize, f64>,
    pub hr: BTreeMap<usize, f64>,
    pub n_users: usize,
    pub seed: u64,
}

impl RankingMetrics {
    /// `{"K": {"ndcg": .., "hr": ..}, "n_users": .., "seed": .., ...extra}`.
    pub fn to_json(&self, extra: &[(&str, serde_json::Value)]) -> serde_json::Value {
        let mut obj = serde_json::Map::new();
        for (k, ndcg) in &self.ndcg {
            obj.insert(
                k.to_string(),
                serde_json::json!({ "ndcg": ndcg, "hr": self.hr[k] }),
            );
        }
        obj.insert("n_users".into(), self.n_users.into());
        obj.insert("seed".into(), self.seed.into());
        for (key, v) in extra {
            obj.insert((*key).to_string(), v.clone());
        }
        serde_json::Value::Object(obj)
    }
}

/// Per-user NDCG/HR averaged over held-out entries. Histories are the
/// `window` most recent interactions before the target; entries with an
/// empty history are skipped.
pub fn evaluate_model<R: Recommender + ?Sized>(
    model: &R,
    heldout: &[HeldOut],
    interacted: &UserItems,
    window: usize,
    ks: &[usize],
    seed: u64,
) -> Result<RankingMetrics> {
    if ks.is_empty() {
        return Err(Error::Config("no cutoffs requested".into()));
    }
    let usable: Vec<&HeldOut> = heldout.iter().filter(|h| !h.history.is_empty()).collect();
    if usable.is_empty() {
        return Err(Error::Contract("no test entries to evaluate".into()));
    }
    let empty = BTreeSet::new();
    let per_user: Vec<MetricValues> = usable
        .par_iter()
        .map(|h| {
            let seen = interacted.get(&h.user_id).unwrap_or(&empty);
            let cands = build_eval_candidates(h.user_id, h.target, seen, model.n_items(), seed)?;
            let (hist, fb) = h.recent(window);
            let ranked: Vec<usize> = rank_all(model, h.user_id, hist, fb, &cands)?
                .into_iter()
                .map(|(i, _)| i)
                .collect();
            ndcg_hr(&ranked, h.target, ks)
        })
        .collect::<Result<_>>()?;
    Ok(average(&per_user, ks, seed))
}

fn average(per_user: &[MetricValues], ks: &[usize], seed: u64) -> RankingMetrics {
    let n = per_user.len() as f64;
    let mean = |f: &dyn Fn(&MetricValues) -> f64| per_user.iter().map(f).sum::<f64>() / n;
    RankingMetrics {
        ndcg: ks.iter().map(|&k| (k, mean(&|m| m.ndcg[&k]))).collect(),
        hr: ks.iter().map(|&k| (k, mean(&|m| m.hr[&k]))).collect(),
        n_users: per_user.len(),
        seed,
    }
}
