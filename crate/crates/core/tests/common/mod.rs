//! Independent oracles shared by the integration tests. None of these call
//! the code paths they check.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use ccr::anchor::{train_anchor, AnchorKind, BatchLoss, PairwiseSample, Recommender, TrainConfig};
use ccr::data::synthetic::{generate_planted_logic_corpus, PlantedLogicConfig, RuleTable};
use ccr::data::{build_sequences, split_leave_one_out, windowize, DatasetSplit, TrainingExample, UserSequence};
use ccr::diffcore::{Graph, ParamStore, Tensor, Var};
use ccr::explain::{ExplanationRecord, InterventionMode, UserContext};
use ccr::logic::{NcrConfig, NcrModel, Vars};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-7;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Like [`random_tensor`] but every entry has magnitude at least 0.05, so
/// kinks at zero (ReLU, |x|) are never within a finite-difference step.
pub fn away_from_zero(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= ABS_FLOOR || diff / analytic.abs().max(numeric.abs()) < REL_TOL
}

/// Reduces any output to a scalar with fixed random weights so that every
/// output entry contributes to the checked gradient.
fn project(g: &mut Graph, out: Var, weights: &Tensor) -> ccr::Result<Var> {
    if g.value(out).is_scalar() {
        return Ok(out);
    }
    let w = g.constant(Tensor::new(g.shape(out).to_vec(), weights.data()[..g.value(out).len()].to_vec())?);
    let p = g.mul(out, w)?;
    Ok(g.sum(p))
}

/// Central finite differences against reverse mode for every input entry.
/// `f` builds the op under test from leaves holding `inputs`.
pub fn gradcheck(
    inputs: &[Tensor],
    weight_seed: u64,
    f: impl Fn(&mut Graph, &[Var]) -> ccr::Result<Var>,
) -> Result<(), String> {
    let weights = random_tensor(&mut rng(weight_seed), &[4096]);
    let eval = |xs: &[Tensor]| -> ccr::Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.input(x.clone(), false)).collect();
        let out = f(&mut g, &vars)?;
        let root = project(&mut g, out, &weights)?;
        Ok(g.value(root).item())
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.input(x.clone(), true)).collect();
    let out = f(&mut g, &vars).map_err(|e| e.to_string())?;
    let root = project(&mut g, out, &weights).map_err(|e| e.to_string())?;
    let grads = g.backward(root).map_err(|e| e.to_string())?;
    for (a, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var);
        for i in 0..inputs[a].len() {
            let mut plus = inputs.to_vec();
            plus[a].data_mut()[i] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[a].data_mut()[i] -= FD_STEP;
            let numeric = (eval(&plus).map_err(|e| e.to_string())? - eval(&minus).map_err(|e| e.to_string())?)
                / (2.0 * FD_STEP);
            if !close(analytic.data()[i], numeric) {
                return Err(format!(
                    "input {a} entry {i}: analytic {} vs numeric {numeric}",
                    analytic.data()[i]
                ));
            }
        }
    }
    Ok(())
}

/// Central finite differences of `loss` over every entry of the named
/// parameters, compared with `analytic`.
pub fn gradcheck_params(
    params: &ParamStore,
    names: &[String],
    analytic: &BTreeMap<String, Tensor>,
    loss: impl Fn(&ParamStore) -> f64,
) -> Result<usize, String> {
    let mut checked = 0;
    for name in names {
        let a = analytic.get(name).ok_or_else(|| format!("no gradient for {name}"))?;
        for i in 0..params.get(name).unwrap().len() {
            let mut p = params.clone();
            p.get_mut(name).unwrap().data_mut()[i] += FD_STEP;
            let up = loss(&p);
            p.get_mut(name).unwrap().data_mut()[i] -= 2.0 * FD_STEP;
            let down = loss(&p);
            let numeric = (up - down) / (2.0 * FD_STEP);
            if !close(a.data()[i], numeric) {
                return Err(format!("{name}[{i}]: analytic {} vs numeric {numeric}", a.data()[i]));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// 1-based rank of `target` after sorting by descending score, ties by
/// ascending id, followed by a linear scan.
pub fn naive_rank(scored: &[(usize, f64)], target: usize) -> Option<usize> {
    let mut v = scored.to_vec();
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut r = 0;
    for (i, (item, _)) in v.iter().enumerate() {
        if *item == target {
            r = i + 1;
            break;
        }
    }
    (r > 0).then_some(r)
}

pub fn naive_ndcg_hr(scored: &[(usize, f64)], target: usize, k: usize) -> (f64, f64) {
    match naive_rank(scored, target) {
        Some(r) if r <= k => (1.0 / (r as f64 + 1.0).log2(), 1.0),
        _ => (0.0, 0.0),
    }
}

/// Top-k by scoring candidates one at a time.
pub fn naive_top_k<R: Recommender + ?Sized>(
    model: &R,
    user: usize,
    history: &[usize],
    feedback: &[bool],
    candidates: &[usize],
    k: usize,
) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = candidates
        .iter()
        .map(|&c| (c, model.score(user, history, feedback, c).unwrap()))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(c, _)| c).collect()
}

/// Rewrites a history the way the PN (`keep_only = false`) or PS
/// (`keep_only = true`) intervention describes, position by position.
pub fn naive_intervention(
    ctx: &UserContext,
    explanation: &BTreeSet<usize>,
    mode: InterventionMode,
    keep_only: bool,
) -> (Vec<usize>, Vec<bool>) {
    let mut items = Vec::new();
    let mut fb = Vec::new();
    for (&item, &liked) in ctx.history.iter().zip(&ctx.feedback) {
        let in_e = explanation.contains(&item);
        let touched = if keep_only { !in_e } else { in_e };
        match (mode, touched) {
            (_, false) => {
                items.push(item);
                fb.push(liked);
            }
            (InterventionMode::Reverse, true) => {
                items.push(item);
                fb.push(!liked);
            }
            (InterventionMode::Remove, true) => {}
        }
    }
    (items, fb)
}

/// PN or PS by recomputing every intervened top-K list from scratch.
/// Returns `(hits, count)`; records whose removal empties the history are
/// left out of both.
pub fn brute_force_probability<R: Recommender + ?Sized>(
    records: &[ExplanationRecord],
    anchor: &R,
    contexts: &BTreeMap<usize, UserContext>,
    k: usize,
    sufficiency: bool,
) -> (usize, usize) {
    let (mut hits, mut count) = (0, 0);
    for r in records {
        if r.explanation_items.is_empty() {
            continue;
        }
        let ctx = &contexts[&r.user_id];
        let e: BTreeSet<usize> = r.explanation_items.iter().copied().collect();
        let (h, fb) = naive_intervention(ctx, &e, r.mode, sufficiency);
        if h.is_empty() {
            continue;
        }
        let top = naive_top_k(anchor, ctx.user, &h, &fb, &ctx.candidates, k);
        count += 1;
        if top.contains(&r.recommended_item) == sufficiency {
            hits += 1;
        }
    }
    (hits, count)
}

/// A prepared planted-logic corpus.
pub struct Corpus {
    pub config: PlantedLogicConfig,
    pub rules: RuleTable,
    pub sequences: Vec<UserSequence>,
    pub split: DatasetSplit,
    pub train: Vec<TrainingExample>,
}

pub fn planted_corpus(config: PlantedLogicConfig, window: usize) -> Corpus {
    let rules = RuleTable::random(config.n_items, config.n_triggers, config.seed).unwrap();
    let data = generate_planted_logic_corpus(&config, &rules).unwrap();
    let sequences = build_sequences(&data).unwrap();
    let split = split_leave_one_out(&sequences);
    let train = windowize(&split.train, window);
    Corpus {
        config,
        rules,
        sequences,
        split,
        train,
    }
}

pub fn small_ncr(n_users: usize, n_items: usize, dim: usize, seed: u64) -> NcrModel {
    let mut cfg = NcrConfig::new(n_users, n_items);
    cfg.dim = dim;
    cfg.seed = seed;
    NcrModel::new(cfg).unwrap()
}

pub fn train_ncr(corpus: &Corpus, dim: usize, epochs: usize, seed: u64) -> NcrModel {
    let mut m = small_ncr(corpus.config.n_users, corpus.config.n_items, dim, seed);
    let tc = TrainConfig {
        lr: 0.002,
        epochs,
        seed,
        ..Default::default()
    };
    train_anchor(&mut m, &corpus.train, &tc).unwrap();
    m
}

pub type OpFn = Box<dyn Fn(&mut Graph, &[Var]) -> ccr::Result<Var>>;

/// One random instance of every differentiable op, as `(name, inputs, op)`.
pub fn op_cases(seed: u64) -> Vec<(&'static str, Vec<Tensor>, OpFn)> {
    let mut r = rng(seed);
    let (m, k, n) = (r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..5));
    let idx: Vec<usize> = (0..r.gen_range(1..6)).map(|_| r.gen_range(0..m)).collect();
    let start = r.gen_range(0..m);
    let len = r.gen_range(1..=m - start);
    let mut t = |shape: &[usize]| random_tensor(&mut r, shape);
    let mut cases: Vec<(&'static str, Vec<Tensor>, OpFn)> = vec![
        ("matmul", vec![t(&[m, k]), t(&[k, n])], Box::new(|g, v| g.matmul(v[0], v[1]))),
        ("add", vec![t(&[m, k]), t(&[m, k])], Box::new(|g, v| g.add(v[0], v[1]))),
        ("sub", vec![t(&[m, k]), t(&[m, k])], Box::new(|g, v| g.sub(v[0], v[1]))),
        ("mul", vec![t(&[m, k]), t(&[m, k])], Box::new(|g, v| g.mul(v[0], v[1]))),
        ("add_row_bias", vec![t(&[m, k]), t(&[k])], Box::new(|g, v| g.add_row_bias(v[0], v[1]))),
        ("concat", vec![t(&[m, k]), t(&[m, n])], Box::new(|g, v| g.concat(v[0], v[1]))),
        ("sigmoid", vec![t(&[m, k])], Box::new(|g, v| Ok(g.sigmoid(v[0])))),
        ("tanh", vec![t(&[m, k])], Box::new(|g, v| Ok(g.tanh(v[0])))),
        ("log_sigmoid", vec![t(&[m, k])], Box::new(|g, v| {
            let s = g.scale(v[0], 8.0);
            Ok(g.log_sigmoid(s))
        })),
        ("scale", vec![t(&[m, k])], Box::new(|g, v| Ok(g.scale(v[0], -2.5)))),
        ("add_scalar", vec![t(&[m, k])], Box::new(|g, v| Ok(g.add_scalar(v[0], 0.7)))),
        ("cosine", vec![t(&[k + 1]), t(&[k + 1])], Box::new(|g, v| g.cosine(v[0], v[1]))),
        ("row_cosine", vec![t(&[m, k + 1]), t(&[k + 1])], Box::new(|g, v| g.row_cosine(v[0], v[1]))),
        ("row_dot", vec![t(&[m, k]), t(&[m, k])], Box::new(|g, v| g.row_dot(v[0], v[1]))),
        ("sum", vec![t(&[m, k])], Box::new(|g, v| Ok(g.sum(v[0])))),
        ("mean", vec![t(&[m, k])], Box::new(|g, v| g.mean(v[0]))),
        ("sum_sq", vec![t(&[m, k])], Box::new(|g, v| Ok(g.sum_sq(v[0])))),
        ("gather_rows", vec![t(&[m, k])], Box::new(move |g, v| g.gather_rows(v[0], &idx))),
        ("slice_rows", vec![t(&[m, k])], Box::new(move |g, v| g.slice_rows(v[0], start, len))),
        ("row_lerp", vec![t(&[m, k]), t(&[m, k]), t(&[m])], Box::new(|g, v| g.row_lerp(v[0], v[1], v[2]))),
    ];
    cases.push(("relu", vec![away_from_zero(&mut r, &[m, k])], Box::new(|g, v| Ok(g.relu(v[0])))));
    cases.push(("l1_norm", vec![away_from_zero(&mut r, &[m, k])], Box::new(|g, v| Ok(g.l1_norm(v[0])))));
    // A two-layer MLP exercises composition through a ReLU.
    let x = random_tensor(&mut r, &[m, k]);
    let w1 = random_tensor(&mut r, &[k, n]);
    let b1 = away_from_zero(&mut r, &[n]);
    let w2 = random_tensor(&mut r, &[n, k]);
    cases.push(("mlp", vec![x, w1, b1, w2], Box::new(|g, v| {
        let h = g.matmul(v[0], v[1])?;
        let h = g.add_row_bias(h, v[2])?;
        let h = g.relu(h);
        g.matmul(h, v[3])
    })));
    cases
}

/// Every op case for `seed`; errors name the op.
pub fn gradcheck_all_ops(seed: u64) -> Result<usize, String> {
    let cases = op_cases(seed);
    let n = cases.len();
    for (name, inputs, f) in cases {
        gradcheck(&inputs, seed, f).map_err(|e| format!("{name} (seed {seed}): {e}"))?;
    }
    Ok(n)
}

/// A small NCR model, one batch of pairwise samples from a random corpus,
/// and a finite-difference check of the full regularized loss over every
/// trainable parameter.
pub fn gradcheck_ncr_loss(seed: u64) -> Result<usize, String> {
    use ccr::anchor::{batch_gradients, PairwiseSample};
    use ccr::data::Source;
    let mut r = rng(seed ^ 0x5eed);
    let (n_users, n_items, w) = (3, 7, r.gen_range(1..4));
    let mut cfg = NcrConfig::new(n_users, n_items);
    cfg.dim = 4;
    cfg.seed = seed;
    let mut model = NcrModel::new(cfg).unwrap();
    // Training-like weights: perturb so biases are not exactly zero.
    for name in model.trainable_names() {
        for v in model.params.get_mut(&name).unwrap().data_mut() {
            *v += r.gen_range(-0.1..0.1);
        }
    }
    let examples: Vec<TrainingExample> = (0..3)
        .map(|_| TrainingExample {
            user_id: r.gen_range(0..n_users),
            history: (0..w).map(|_| r.gen_range(0..n_items)).collect(),
            history_feedback: (0..w).map(|_| r.gen_bool(0.5)).collect(),
            target: r.gen_range(0..n_items),
            source: Source::Original,
            confidence: 1.0,
        })
        .collect();
    let batch: Vec<PairwiseSample<'_>> = examples
        .iter()
        .map(|e| PairwiseSample {
            example: e,
            negative: (e.target + 1 + r.gen_range(0..n_items - 1)) % n_items,
        })
        .collect();
    let analytic = batch_gradients(&model, &batch).map_err(|e| e.to_string())?.grads;
    let names = model.trainable_names();
    let base = model.clone();
    gradcheck_params(&base.params, &names, &analytic, |p| {
        let mut m = base.clone();
        m.params = p.clone();
        batch_gradients(&m, &batch).unwrap().loss
    })
}

/// Scores from a fixed function of `(user, item)` or from the planted rules.
pub enum Oracle {
    Random(u64),
    Rules(RuleTable),
}

pub struct Scorer(pub Oracle, pub usize, pub ParamStore);

impl Recommender for Scorer {
    fn kind(&self) -> AnchorKind {
        AnchorKind::Ncr
    }
    fn n_items(&self) -> usize {
        self.1
    }
    fn params(&self) -> &ParamStore {
        &self.2
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.2
    }
    fn config_json(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
    fn score_candidates(&self, user: usize, history: &[usize], feedback: &[bool], cands: &[usize]) -> ccr::Result<Vec<f64>> {
        Ok(match &self.0 {
            Oracle::Random(seed) => cands
                .iter()
                .map(|&c| rng(seed ^ ((user as u64) << 32) ^ c as u64).gen::<f64>())
                .collect(),
            Oracle::Rules(rules) => {
                let p = rules.predict(history, feedback);
                cands.iter().map(|&c| if Some(c) == p { 1.0 } else { 0.0 }).collect()
            }
        })
    }
    fn batch_loss(&self, _: &mut Graph, _: &Vars, _: &[PairwiseSample<'_>]) -> ccr::Result<BatchLoss> {
        Err(ccr::Error::Contract("not trainable".into()))
    }
}
