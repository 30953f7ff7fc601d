//! Counterfactual explanations for recommended items, scored by
//! probability of necessity (PN) and sufficiency (PS).
//!
//! An explanation for item `v` recommended to a user is the set of history
//! items whose feedback the sampler's Δ search flips in order to push `v`
//! down. PN asks whether intervening on exactly those items removes `v`
//! from the anchor's top-K; PS asks whether `v` survives when every other
//! history item is intervened on instead.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchor::{rank_top_k, Recommender};
use crate::data::HeldOut;
use crate::error::{Error, Result};
use crate::eval::{build_eval_candidates, UserItems};
use crate::logic::NcrModel;
use crate::sampler::{apply_intervention, generate_next, optimize_deltas, DeltaQuery, SamplerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionMode {
    /// Reverse the feedback of intervened items.
    Reverse,
    /// Drop intervened items from the history.
    Remove,
}

/// What the anchor sees for one user at evaluation time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserContext {
    pub user: usize,
    pub history: Vec<usize>,
    pub feedback: Vec<bool>,
    /// The evaluation candidate set (target plus sampled negatives).
    pub candidates: Vec<usize>,
}

impl UserContext {
    /// Applies `mode` to every history position whose item is (or, with
    /// `complement`, is not) in `items`.
    pub fn intervene(&self, items: &BTreeSet<usize>, mode: InterventionMode, complement: bool) -> Result<(Vec<usize>, Vec<bool>)> {
        let hit: Vec<bool> = self.history.iter().map(|i| items.contains(i) != complement).collect();
        match mode {
            InterventionMode::Reverse => Ok((self.history.clone(), apply_intervention(&self.feedback, &hit)?)),
            InterventionMode::Remove => Ok(self
                .history
                .iter()
                .zip(&self.feedback)
                .zip(&hit)
                .filter(|(_, &h)| !h)
                .map(|((&i, &f), _)| (i, f))
                .unzip()),
        }
    }
}

/// Contexts for held-out entries: the `window` most recent history items
/// and the same 101-item candidate set used for ranking evaluation.
pub fn contexts_from_heldout(
    heldout: &[HeldOut],
    interacted: &UserItems,
    n_items: usize,
    window: usize,
    seed: u64,
) -> Result<Vec<UserContext>> {
    let empty = BTreeSet::new();
    heldout
        .iter()
        .filter(|h| !h.history.is_empty())
        .map(|h| {
            let (hist, fb) = h.recent(window);
            Ok(UserContext {
                user: h.user_id,
                history: hist.to_vec(),
                feedback: fb.to_vec(),
                candidates: build_eval_candidates(
                    h.user_id,
                    h.target,
                    interacted.get(&h.user_id).unwrap_or(&empty),
                    n_items,
                    seed,
                )?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub user_id: usize,
    pub recommended_item: usize,
    /// History items whose feedback flip suppresses the recommendation.
    pub explanation_items: Vec<usize>,
    pub mode: InterventionMode,
    /// The sampler's top item once the explanation is intervened on; `None`
    /// when removal leaves an empty history.
    pub alternative_item: Option<usize>,
}

/// The anchor's top-`n` items for each context.
pub fn top_n_lists<R: Recommender + ?Sized>(anchor: &R, contexts: &[UserContext], n: usize) -> Result<Vec<Vec<usize>>> {
    contexts
        .par_iter()
        .map(|c| rank_top_k(anchor, c.user, &c.history, &c.feedback, &c.candidates, n))
        .collect()
}

/// One Δ search per (user, recommended item), with the recommended item as
/// the suppressed target. Items whose Δ binarizes to all zeros get no
/// record. Records come out in context order, then list order.
pub fn extract_explanations(
    sampler: &NcrModel,
    contexts: &[UserContext],
    top_items: &[Vec<usize>],
    config: &SamplerConfig,
    mode: InterventionMode,
    seed: u64,
) -> Result<Vec<ExplanationRecord>> {
    if contexts.len() != top_items.len() {
        return Err(Error::shape("extract_explanations", &[contexts.len()], &[top_items.len()]));
    }
    let mut queries = Vec::new();
    let mut init = Vec::new();
    let mut owner = Vec::new();
    for (c, (ctx, items)) in contexts.iter().zip(top_items).enumerate() {
        for (j, &item) in items.iter().enumerate() {
            queries.push(DeltaQuery {
                user: ctx.user,
                history: &ctx.history,
                feedback: &ctx.feedback,
                target: item,
            });
            init.push(((ctx.user as u64) << 20) | j as u64);
            owner.push((c, item));
        }
    }
    let deltas = optimize_deltas(sampler, &queries, &init, config, seed)?;
    let pool: Vec<usize> = match &config.candidates {
        Some(c) => c.clone(),
        None => (0..sampler.config.n_items).collect(),
    };

    let records: Vec<Option<ExplanationRecord>> = deltas
        .par_iter()
        .zip(&owner)
        .map(|(d, &(c, item))| {
            let ctx = &contexts[c];
            let Ok(d) = d else { return Ok(None) };
            if d.is_zero() {
                return Ok(None);
            }
            let explanation: Vec<usize> = ctx
                .history
                .iter()
                .zip(&d.binarized)
                .filter(|(_, &b)| b)
                .map(|(&i, _)| i)
                .collect();
            let set: BTreeSet<usize> = explanation.iter().copied().collect();
            let (hist, fb) = ctx.intervene(&set, mode, false)?;
            let alternative_item = if hist.is_empty() {
                None
            } else {
                Some(generate_next(sampler, ctx.user, &hist, &fb, &pool)?.0)
            };
            Ok(Some(ExplanationRecord {
                user_id: ctx.user,
                recommended_item: item,
                explanation_items: explanation,
                mode,
                alternative_item,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(records.into_iter().flatten().collect())
}

/// Numerator, denominator and their ratio (`None` for an empty denominator).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub hits: usize,
    pub count: usize,
    pub value: Option<f64>,
    /// Records that could not be scored (removal emptied the history).
    pub skipped: usize,
}

fn checked_context<'a>(record: &ExplanationRecord, contexts: &'a BTreeMap<usize, UserContext>) -> Result<&'a UserContext> {
    let ctx = contexts
        .get(&record.user_id)
        .ok_or_else(|| Error::Contract(format!("no evaluation context for user {}", record.user_id)))?;
    if let Some(i) = record.explanation_items.iter().find(|i| !ctx.history.contains(i)) {
        return Err(Error::Contract(format!(
            "explanation item {i} is not in user {}'s history",
            record.user_id
        )));
    }
    Ok(ctx)
}

fn probability<R: Recommender + ?Sized>(
    records: &[ExplanationRecord],
    anchor: &R,
    contexts: &BTreeMap<usize, UserContext>,
    k: usize,
    sufficiency: bool,
) -> Result<Ratio> {
    let outcomes: Vec<Option<bool>> = records
        .par_iter()
        .filter(|r| !r.explanation_items.is_empty())
        .map(|r| {
            let ctx = checked_context(r, contexts)?;
            let set: BTreeSet<usize> = r.explanation_items.iter().copied().collect();
            let (hist, fb) = ctx.intervene(&set, r.mode, sufficiency)?;
            if hist.is_empty() {
                return Ok(None);
            }
            let top = rank_top_k(anchor, ctx.user, &hist, &fb, &ctx.candidates, k)?;
            let present = top.contains(&r.recommended_item);
            Ok(Some(if sufficiency { present } else { !present }))
        })
        .collect::<Result<_>>()?;
    let count = outcomes.iter().filter(|o| o.is_some()).count();
    let hits = outcomes.iter().filter(|o| **o == Some(true)).count();
    Ok(Ratio {
        hits,
        count,
        value: (count > 0).then(|| hits as f64 / count as f64),
        skipped: outcomes.len() - count,
    })
}

/// Share of explained recommendations that leave the anchor's top-K once
/// their explanation items are intervened on.
pub fn evaluate_pn<R: Recommender + ?Sized>(
    records: &[ExplanationRecord],
    anchor: &R,
    contexts: &BTreeMap<usize, UserContext>,
    k: usize,
) -> Result<Ratio> {
    probability(records, anchor, contexts, k, false)
}

/// Share of explained recommendations that stay in the anchor's top-K when
/// only the explanation items keep their factual feedback.
pub fn evaluate_ps<R: Recommender + ?Sized>(
    records: &[ExplanationRecord],
    anchor: &R,
    contexts: &BTreeMap<usize, UserContext>,
    k: usize,
) -> Result<Ratio> {
    probability(records, anchor, contexts, k, true)
}

/// Harmonic mean of PN and PS; 0 when both are 0.
pub fn f_ns(pn: f64, ps: f64) -> f64 {
    if pn + ps == 0.0 {
        0.0
    } else {
        2.0 * pn * ps / (pn + ps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PnPsReport {
    pub pn: Option<f64>,
    pub ps: Option<f64>,
    pub f_ns: Option<f64>,
    /// Users whose recommendations were explained.
    pub evaluated: usize,
    /// Records with a non-empty explanation.
    pub nonempty: usize,
    pub pn_detail: Ratio,
    pub ps_detail: Ratio,
    pub k: usize,
    pub n: usize,
    pub mode: InterventionMode,
    pub seed: u64,
    pub anchor: String,
    pub anchor_checksum: String,
    pub sampler_checksum: String,
}

/// Extracts explanations for the anchor's top-`n` lists and scores them
/// with the cutoff `k = n`.
#[allow(clippy::too_many_arguments)]
pub fn explain_and_score<R: Recommender + ?Sized>(
    sampler: &NcrModel,
    anchor: &R,
    contexts: &[UserContext],
    n: usize,
    config: &SamplerConfig,
    mode: InterventionMode,
    seed: u64,
) -> Result<(Vec<ExplanationRecord>, PnPsReport)> {
    let tops = top_n_lists(anchor, contexts, n)?;
    let records = extract_explanations(sampler, contexts, &tops, config, mode, seed)?;
    let by_user: BTreeMap<usize, UserContext> = contexts.iter().map(|c| (c.user, c.clone())).collect();
    let pn = evaluate_pn(&records, anchor, &by_user, n)?;
    let ps = evaluate_ps(&records, anchor, &by_user, n)?;
    let report = PnPsReport {
        pn: pn.value,
        ps: ps.value,
        f_ns: match (pn.value, ps.value) {
            (Some(a), Some(b)) => Some(f_ns(a, b)),
            _ => None,
        },
        evaluated: contexts.len(),
        nonempty: records.len(),
        pn_detail: pn,
        ps_detail: ps,
        k: n,
        n,
        mode,
        seed,
        anchor: anchor.kind().tag().to_string(),
        anchor_checksum: crate::diffcore::checkpoint::checksum(&anchor.checkpoint_bytes()?),
        sampler_checksum: crate::diffcore::checkpoint::checksum(&sampler.checkpoint_bytes()?),
    };
    Ok((records, report))
}
