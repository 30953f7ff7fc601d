//! Counterfactual example generation.
//!
//! For a training example the sampler searches for a small set of history
//! positions whose like/dislike feedback, once flipped, pushes the observed
//! next item down. The search relaxes the binary flip vector Δ to `[0, 1]^W`
//! and minimizes `‖Δ‖₁ + α·S(target | H, Δ)` by projected gradient descent,
//! where each history literal `L` is blended with its negation:
//!
//! ```text
//! e* = L·(1 − δ) + ¬L·δ
//! ```
//!
//! and the disjunction term is `¬e*`. At `δ = 0` the expression is exactly
//! the factual one. The binarized Δ (`δ > 0.5`) yields intervened feedback
//! `B*`, and the sampler's top item under `B*` becomes the counterfactual
//! target when it differs from the factual one and its score exceeds κ.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Source, TrainingExample};
use crate::diffcore::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::logic::{self, EventVector, NcrModel};
use crate::seed;

pub const DEFAULT_ALPHA: f64 = 10.0;
pub const DEFAULT_KAPPA: f64 = 0.7;
pub const DEFAULT_OPT_STEPS: usize = 100;
pub const DEFAULT_OPT_LR: f64 = 0.05;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Examples optimized together in one graph.
const CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Weight of the target-score term against the ℓ1 sparsity term.
    pub alpha: f64,
    /// Minimum sampler score for accepting a counterfactual.
    pub kappa: f64,
    pub opt_steps: usize,
    pub opt_lr: f64,
    pub threshold: f64,
    /// Optimization restarts (and so at most this many counterfactuals) per
    /// original example.
    pub per_sequence: usize,
    /// Items eligible as counterfactual targets; `None` means the catalog.
    pub candidates: Option<Vec<usize>>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            kappa: DEFAULT_KAPPA,
            opt_steps: DEFAULT_OPT_STEPS,
            opt_lr: DEFAULT_OPT_LR,
            threshold: DEFAULT_THRESHOLD,
            per_sequence: 1,
            candidates: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        // κ = 1 is allowed so that sweeps can include the accept-nothing end.
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::Config(format!("kappa {} outside [0, 1]", self.kappa)));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha {} must be finite and non-negative", self.alpha)));
        }
        if !(self.opt_lr > 0.0) || !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::Config("opt_lr must be positive and threshold in [0, 1)".into()));
        }
        if self.per_sequence == 0 {
            return Err(Error::Config("per_sequence must be at least 1".into()));
        }
        if matches!(&self.candidates, Some(c) if c.is_empty()) {
            return Err(Error::Config("candidate set is empty".into()));
        }
        Ok(())
    }
}

/// `B* = (1 − B)⊙Δ + B⊙(1 − Δ)`: bit `t` is flipped iff `Δ_t = 1`.
pub fn apply_intervention(feedback: &[bool], delta: &[bool]) -> Result<Vec<bool>> {
    if feedback.len() != delta.len() {
        return Err(Error::shape("apply_intervention", &[feedback.len()], &[delta.len()]));
    }
    Ok(feedback.iter().zip(delta).map(|(&b, &d)| b ^ d).collect())
}

/// Relaxed intervention on literals: `e*_t = ¬L_t·δ_t + L_t·(1 − δ_t)`,
/// with `¬L_t` produced by the model's NOT module.
pub fn intervene_events(model: &NcrModel, literals: &[EventVector], delta: &[f64]) -> Result<Vec<EventVector>> {
    if literals.len() != delta.len() {
        return Err(Error::shape("intervene_events", &[literals.len()], &[delta.len()]));
    }
    if let Some(d) = delta.iter().find(|d| !(0.0..=1.0).contains(*d)) {
        return Err(Error::Domain {
            op: "intervene_events",
            reason: format!("delta {d} outside [0, 1]"),
        });
    }
    literals
        .iter()
        .zip(delta)
        .map(|(lit, &d)| {
            let neg = model.apply_not(lit)?;
            let vector = lit.vector.iter().zip(&neg.vector).map(|(a, b)| b * d + a * (1.0 - d)).collect();
            Ok(EventVector {
                vector,
                negated: if d > DEFAULT_THRESHOLD { neg.negated } else { lit.negated },
            })
        })
        .collect()
}

/// Result of one Δ search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionVector {
    /// Relaxed flip intensities in `[0, 1]`.
    pub deltas: Vec<f64>,
    /// `deltas[t] > threshold`.
    pub binarized: Vec<bool>,
    /// Objective at the returned `deltas`.
    pub objective: f64,
    /// Objective at the random initialization.
    pub initial_objective: f64,
}

impl InterventionVector {
    pub fn flips(&self) -> usize {
        self.binarized.iter().filter(|&&b| b).count()
    }

    pub fn is_zero(&self) -> bool {
        self.flips() == 0
    }
}

/// One Δ search problem: suppress `target` given a history.
#[derive(Clone, Copy, Debug)]
pub struct DeltaQuery<'a> {
    pub user: usize,
    pub history: &'a [usize],
    pub feedback: &'a [bool],
    pub target: usize,
}

impl<'a> DeltaQuery<'a> {
    pub fn from_example(ex: &'a TrainingExample) -> Self {
        Self {
            user: ex.user_id,
            history: &ex.history,
            feedback: &ex.history_feedback,
            target: ex.target,
        }
    }
}

/// `‖Δ‖₁ + α·S(target | H, Δ)` at a given relaxed Δ.
pub fn delta_objective(model: &NcrModel, query: &DeltaQuery<'_>, delta: &[f64], alpha: f64) -> Result<f64> {
    let (l1, score) = relaxed_objective_parts(model, std::slice::from_ref(query), delta)?;
    Ok(l1[0] + alpha * score[0])
}

/// Per-query `(‖Δ‖₁, score)` without gradients.
fn relaxed_objective_parts(model: &NcrModel, queries: &[DeltaQuery<'_>], delta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let lits = Literals::new(model, queries)?;
    let mut g = Graph::new();
    let (scores, _) = lits.forward(model, &mut g, delta.to_vec(), false)?;
    let s = g.value(scores).data().to_vec();
    let w = lits.w;
    let b = queries.len();
    let l1 = (0..b).map(|j| (0..w).map(|t| delta[t * b + j].abs()).sum()).collect();
    Ok((l1, s))
}

/// Precomputed literal and negated-literal rows for a batch of queries,
/// laid out position-major (`t * batch + j`).
struct Literals {
    w: usize,
    batch: usize,
    lit: Tensor,
    neg: Tensor,
    target: Tensor,
}

impl Literals {
    fn new(model: &NcrModel, queries: &[DeltaQuery<'_>]) -> Result<Self> {
        let b = queries.len();
        let w = queries[0].history.len();
        for q in queries {
            if q.history.is_empty() || q.history.len() != w || q.feedback.len() != w {
                return Err(Error::Contract("Δ search needs equal, non-empty history lengths".into()));
            }
        }
        let mut users = Vec::with_capacity(w * b);
        let mut items = Vec::with_capacity(w * b);
        let mut dislike = Vec::with_capacity(w * b);
        for t in 0..w {
            for q in queries {
                users.push(q.user);
                items.push(q.history[t]);
                dislike.push(if q.feedback[t] { 0.0 } else { 1.0 });
            }
        }
        users.extend(queries.iter().map(|q| q.user));
        items.extend(queries.iter().map(|q| q.target));

        let mut g = Graph::new();
        let vars = model.frozen_vars(&mut g);
        let ev = model.encode_const(&mut g, &vars, &users, &items)?;
        let e = g.slice_rows(ev, 0, w * b)?;
        let target = g.slice_rows(ev, w * b, b)?;
        let ne = logic::not(&mut g, &vars, e)?;
        let wv = g.constant(Tensor::vector(dislike));
        let lit = g.row_lerp(e, ne, wv)?;
        let neg = logic::not(&mut g, &vars, lit)?;
        Ok(Self {
            w,
            batch: b,
            lit: g.value(lit).clone(),
            neg: g.value(neg).clone(),
            target: g.value(target).clone(),
        })
    }

    /// Scores of the targets under relaxed Δ (`[w * batch]`). Returns the
    /// score node and the Δ leaf.
    fn forward(&self, model: &NcrModel, g: &mut Graph, delta: Vec<f64>, grad: bool) -> Result<(crate::diffcore::Var, crate::diffcore::Var)> {
        let vars = model.frozen_vars(g);
        let lit = g.constant(self.lit.clone());
        let neg = g.constant(self.neg.clone());
        let target = g.constant(self.target.clone());
        let d = g.input(Tensor::vector(delta), grad);
        let estar = g.row_lerp(lit, neg, d)?;
        let terms = logic::not(g, &vars, estar)?;
        let acc = logic::fold_or(g, &vars, terms, self.w, self.batch)?;
        let expr = logic::or(g, &vars, acc, target)?;
        Ok((logic::score_rows(g, &vars, expr)?, d))
    }
}

/// Outcome of a batched Δ search for one query.
type DeltaOutcome = std::result::Result<InterventionVector, String>;

/// Projected gradient descent on a batch of queries sharing a history
/// length. Each query's Δ starts from its own uniform draw, is updated by a
/// plain gradient step then clamped to `[0, 1]`, and the best objective seen
/// is kept. Queries whose objective turns non-finite are aborted
/// individually.
fn optimize_batch(
    model: &NcrModel,
    queries: &[DeltaQuery<'_>],
    inits: &[Vec<f64>],
    config: &SamplerConfig,
) -> Result<Vec<DeltaOutcome>> {
    let lits = Literals::new(model, queries)?;
    let (w, b) = (lits.w, lits.batch);
    let mut delta = vec![0.0; w * b];
    for (j, init) in inits.iter().enumerate() {
        for t in 0..w {
            delta[t * b + j] = init[t];
        }
    }
    let mut aborted: Vec<Option<String>> = vec![None; b];
    let mut best: Vec<Option<(f64, Vec<f64>)>> = vec![None; b];
    let mut initial = vec![f64::NAN; b];

    for step in 0..=config.opt_steps {
        let mut g = Graph::new();
        let (scores, dv) = lits.forward(model, &mut g, delta.clone(), true)?;
        let sum_scores = g.sum(scores);
        let weighted = g.scale(sum_scores, config.alpha);
        let l1 = g.l1_norm(dv);
        let obj = g.add(l1, weighted)?;
        let s = g.value(scores).data().to_vec();
        let grads = g.backward(obj)?;
        let gd = grads.get(dv);
        let gd = gd.data();

        for j in 0..b {
            if aborted[j].is_some() {
                continue;
            }
            let dj: Vec<f64> = (0..w).map(|t| delta[t * b + j]).collect();
            let value = dj.iter().map(|v| v.abs()).sum::<f64>() + config.alpha * s[j];
            let grad_ok = (0..w).all(|t| gd[t * b + j].is_finite());
            if !value.is_finite() || !grad_ok {
                aborted[j] = Some(format!("non-finite objective at step {step}"));
                continue;
            }
            if step == 0 {
                initial[j] = value;
            }
            if best[j].as_ref().map_or(true, |(v, _)| value < *v) {
                best[j] = Some((value, dj));
            }
            if step < config.opt_steps {
                for t in 0..w {
                    let k = t * b + j;
                    delta[k] = (delta[k] - config.opt_lr * gd[k]).clamp(0.0, 1.0);
                }
            }
        }
    }

    Ok((0..b)
        .map(|j| match (&aborted[j], &best[j]) {
            (Some(reason), _) => Err(reason.clone()),
            (None, Some((value, d))) => Ok(InterventionVector {
                binarized: d.iter().map(|&x| x > config.threshold).collect(),
                deltas: d.clone(),
                objective: *value,
                initial_objective: initial[j],
            }),
            (None, None) => Err("no finite objective".into()),
        })
        .collect())
}

fn init_delta(seed: u64, index: u64, w: usize) -> Vec<f64> {
    let mut rng = seed::rng(seed, "delta-init", index);
    (0..w).map(|_| rng.gen::<f64>()).collect()
}

/// Runs the Δ search for many queries. `init_index[i]` selects query `i`'s
/// random initialization, so results do not depend on batching or on the
/// number of worker threads.
pub fn optimize_deltas(
    model: &NcrModel,
    queries: &[DeltaQuery<'_>],
    init_index: &[u64],
    config: &SamplerConfig,
    seed: u64,
) -> Result<Vec<std::result::Result<InterventionVector, String>>> {
    config.validate()?;
    if queries.len() != init_index.len() {
        return Err(Error::shape("optimize_deltas", &[queries.len()], &[init_index.len()]));
    }
    // Group by history length so every chunk is rectangular.
    let mut order: Vec<usize> = (0..queries.len()).collect();
    order.sort_by_key(|&i| (queries[i].history.len(), i));
    let mut chunks: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match chunks.last_mut() {
            Some(c) if c.len() < CHUNK && queries[c[0]].history.len() == queries[i].history.len() => c.push(i),
            _ => chunks.push(vec![i]),
        }
    }
    let solved: Vec<Vec<(usize, DeltaOutcome)>> = chunks
        .par_iter()
        .map(|idx| {
            let qs: Vec<DeltaQuery<'_>> = idx.iter().map(|&i| queries[i]).collect();
            let inits: Vec<Vec<f64>> = idx
                .iter()
                .map(|&i| init_delta(seed, init_index[i], queries[i].history.len()))
                .collect();
            let out = match optimize_batch(model, &qs, &inits, config) {
                Ok(out) => out,
                // A failure anywhere in the batch (e.g. a non-finite
                // gradient) is isolated by retrying one query at a time.
                Err(_) => (0..qs.len())
                    .map(|k| match optimize_batch(model, &qs[k..k + 1], &inits[k..k + 1], config) {
                        Ok(mut v) => v.remove(0),
                        Err(e) => Err(e.to_string()),
                    })
                    .collect(),
            };
            Ok(idx.iter().copied().zip(out).collect())
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<Option<DeltaOutcome>> = vec![None; queries.len()];
    for (i, r) in solved.into_iter().flatten() {
        out[i] = Some(r);
    }
    Ok(out.into_iter().map(|r| r.expect("every query solved")).collect())
}

/// Δ search for a single training example.
pub fn optimize_delta(
    model: &NcrModel,
    example: &TrainingExample,
    config: &SamplerConfig,
    seed: u64,
    index: u64,
) -> Result<InterventionVector> {
    let q = DeltaQuery::from_example(example);
    optimize_deltas(model, &[q], &[index], config, seed)?
        .remove(0)
        .map_err(|reason| Error::Domain {
            op: "optimize_delta",
            reason,
        })
}

/// The sampler's top item for a history under (intervened) feedback, with
/// its score. Ties go to the smallest item id.
pub fn generate_next(
    model: &NcrModel,
    user: usize,
    history: &[usize],
    feedback: &[bool],
    candidates: &[usize],
) -> Result<(usize, f64)> {
    if candidates.is_empty() {
        return Err(Error::Contract("empty candidate set".into()));
    }
    let ranked = model.rank_candidates(user, history, feedback, candidates)?;
    Ok(ranked[0])
}

/// Per-attempt result before the κ filter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum AttemptOutcome {
    ZeroDelta,
    UnchangedTarget,
    /// Same intervened feedback and target as an earlier restart of the
    /// same original.
    Duplicate,
    Aborted { reason: String },
    Generated { example: TrainingExample, flips: usize },
}

/// Counts per outcome. `attempted` is the sum of the other fields.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationReport {
    pub attempted: usize,
    pub zero_delta: usize,
    pub unchanged_target: usize,
    pub below_kappa: usize,
    pub duplicate: usize,
    pub aborted: usize,
    pub accepted: usize,
}

impl AugmentationReport {
    pub fn is_partition(&self) -> bool {
        self.attempted
            == self.zero_delta + self.unchanged_target + self.below_kappa + self.duplicate + self.aborted + self.accepted
    }
}

fn catalog(model: &NcrModel, config: &SamplerConfig) -> Vec<usize> {
    match &config.candidates {
        Some(c) => c.clone(),
        None => (0..model.config.n_items).collect(),
    }
}

/// Δ search, binarization and generation for every (example, restart)
/// pair, in input order. No κ filtering is applied.
pub fn generate_counterfactuals(
    examples: &[TrainingExample],
    model: &NcrModel,
    config: &SamplerConfig,
    seed: u64,
) -> Result<Vec<AttemptOutcome>> {
    config.validate()?;
    let r = config.per_sequence;
    let mut queries = Vec::with_capacity(examples.len() * r);
    let mut init = Vec::with_capacity(examples.len() * r);
    for (i, ex) in examples.iter().enumerate() {
        for k in 0..r {
            queries.push(DeltaQuery::from_example(ex));
            init.push((i * r + k) as u64);
        }
    }
    let deltas = optimize_deltas(model, &queries, &init, config, seed)?;
    let cands = catalog(model, config);

    let per_attempt: Vec<AttemptOutcome> = deltas
        .par_iter()
        .enumerate()
        .map(|(a, d)| {
            let ex = &examples[a / r];
            let delta = match d {
                Err(reason) => return Ok(AttemptOutcome::Aborted { reason: reason.clone() }),
                Ok(d) if d.is_zero() => return Ok(AttemptOutcome::ZeroDelta),
                Ok(d) => d,
            };
            let fb = apply_intervention(&ex.history_feedback, &delta.binarized)?;
            let (item, score) = match generate_next(model, ex.user_id, &ex.history, &fb, &cands) {
                Ok(v) => v,
                Err(e) => return Ok(AttemptOutcome::Aborted { reason: e.to_string() }),
            };
            if item == ex.target {
                return Ok(AttemptOutcome::UnchangedTarget);
            }
            Ok(AttemptOutcome::Generated {
                example: TrainingExample {
                    user_id: ex.user_id,
                    history: ex.history.clone(),
                    history_feedback: fb,
                    target: item,
                    source: Source::Counterfactual,
                    confidence: score.clamp(0.0, 1.0),
                },
                flips: delta.flips(),
            })
        })
        .collect::<Result<_>>()?;

    // Collapse identical counterfactuals from restarts of the same original.
    let mut out = Vec::with_capacity(per_attempt.len());
    for chunk in per_attempt.chunks(r) {
        let mut seen: BTreeSet<(Vec<bool>, usize)> = BTreeSet::new();
        for o in chunk {
            match o {
                AttemptOutcome::Generated { example, .. }
                    if !seen.insert((example.history_feedback.clone(), example.target)) =>
                {
                    out.push(AttemptOutcome::Duplicate)
                }
                other => out.push(other.clone()),
            }
        }
    }
    Ok(out)
}

/// Applies the κ filter (accept iff confidence > κ) to generation outcomes.
pub fn filter_by_kappa(outcomes: &[AttemptOutcome], kappa: f64) -> (Vec<TrainingExample>, AugmentationReport) {
    let mut report = AugmentationReport {
        attempted: outcomes.len(),
        ..Default::default()
    };
    let mut accepted = Vec::new();
    for o in outcomes {
        match o {
            AttemptOutcome::ZeroDelta => report.zero_delta += 1,
            AttemptOutcome::UnchangedTarget => report.unchanged_target += 1,
            AttemptOutcome::Duplicate => report.duplicate += 1,
            AttemptOutcome::Aborted { .. } => report.aborted += 1,
            AttemptOutcome::Generated { example, .. } => {
                if example.confidence > kappa {
                    report.accepted += 1;
                    accepted.push(example.clone());
                } else {
                    report.below_kappa += 1;
                }
            }
        }
    }
    (accepted, report)
}

/// Full augmentation sweep: one Δ search per original example and restart,
/// then κ filtering. Output order follows the input order.
pub fn augment_dataset(
    examples: &[TrainingExample],
    model: &NcrModel,
    config: &SamplerConfig,
    seed: u64,
) -> Result<(Vec<TrainingExample>, AugmentationReport)> {
    let outcomes = generate_counterfactuals(examples, model, config, seed)?;
    Ok(filter_by_kappa(&outcomes, config.kappa))
}
