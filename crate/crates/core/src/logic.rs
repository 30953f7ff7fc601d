//! Neural collaborative reasoning model.
//!
//! A user-item interaction is encoded into an event vector by a two-layer
//! MLP over the concatenated user and item embeddings. A history with
//! like/dislike feedback becomes the implication "history literals imply
//! the target", rewritten as a disjunction:
//!
//! ```text
//! (¬L1 ∨ ¬L2 ∨ … ∨ ¬Ln) ∨ e_target      where Li = e_i if liked, ¬e_i if disliked
//! ```
//!
//! so a liked item contributes `¬e` and a disliked one `¬¬e`. NOT and OR
//! are learned MLPs; the disjunction is folded left to right in history
//! order. A candidate's score is `(1 + cos(expr, T)) / 2` for a fixed unit
//! vector `T` standing for "true".

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{glorot, uniform_init, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_BETA: f64 = 5.0;
pub const DEFAULT_LAMBDA_LOGIC: f64 = 0.1;
pub const DEFAULT_LAMBDA_W: f64 = 1e-4;

pub(crate) const USER_EMB: &str = "user_emb";
pub(crate) const ITEM_EMB: &str = "item_emb";
pub(crate) const TRUE_VECTOR: &str = "true_vector";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NcrConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub dim: usize,
    pub window: usize,
    /// Sharpness of the pairwise ranking loss.
    pub beta: f64,
    /// Weight of the double-negation regularizer.
    pub lambda_logic: f64,
    /// ℓ2 weight decay.
    pub lambda_w: f64,
    pub seed: u64,
    /// Also allocate the AND module. The default pipeline never uses it.
    #[serde(default)]
    pub and_module: bool,
}

impl NcrConfig {
    pub fn new(n_users: usize, n_items: usize) -> Self {
        Self {
            n_users,
            n_items,
            dim: DEFAULT_DIM,
            window: crate::data::DEFAULT_WINDOW,
            beta: DEFAULT_BETA,
            lambda_logic: DEFAULT_LAMBDA_LOGIC,
            lambda_w: DEFAULT_LAMBDA_W,
            seed: 0,
            and_module: false,
        }
    }
}

/// Learned encoding of one interaction, possibly negated.
#[derive(Clone, Debug, PartialEq)]
pub struct EventVector {
    pub vector: Vec<f64>,
    /// Toggled by every application of NOT.
    pub negated: bool,
}

/// Graph handles for a model's parameters.
#[doc(hidden)]
pub struct Vars(BTreeMap<String, Var>);

impl Vars {
    pub(crate) fn new(map: BTreeMap<String, Var>) -> Self {
        Self(map)
    }

    pub(crate) fn get(&self, name: &str) -> Result<Var> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("parameter `{name}` not registered")))
    }
}

/// `relu(x·W1 + b1)·W2 + b2` with weights named `{prefix}_w1` etc.
pub(crate) fn mlp(g: &mut Graph, vars: &Vars, prefix: &str, x: Var) -> Result<Var> {
    let h = g.matmul(x, vars.get(&format!("{prefix}_w1"))?)?;
    let h = g.add_row_bias(h, vars.get(&format!("{prefix}_b1"))?)?;
    let h = g.relu(h);
    let o = g.matmul(h, vars.get(&format!("{prefix}_w2"))?)?;
    g.add_row_bias(o, vars.get(&format!("{prefix}_b2"))?)
}

pub(crate) fn encode(g: &mut Graph, vars: &Vars, user_rows: Var, item_rows: Var) -> Result<Var> {
    let x = g.concat(user_rows, item_rows)?;
    mlp(g, vars, "enc", x)
}

pub(crate) fn not(g: &mut Graph, vars: &Vars, x: Var) -> Result<Var> {
    mlp(g, vars, "not", x)
}

pub(crate) fn or(g: &mut Graph, vars: &Vars, a: Var, b: Var) -> Result<Var> {
    let x = g.concat(a, b)?;
    mlp(g, vars, "or", x)
}

/// `(1 + cos(row, T)) / 2` per row.
pub(crate) fn score_rows(g: &mut Graph, vars: &Vars, expr: Var) -> Result<Var> {
    let c = g.row_cosine(expr, vars.get(TRUE_VECTOR)?)?;
    let shifted = g.add_scalar(c, 1.0);
    Ok(g.scale(shifted, 0.5))
}

/// Disjunction terms for history events `h` (`[rows, d]`): `¬e` for liked
/// rows, `¬¬e` for disliked ones. Returns `(terms, ¬e, ¬¬e)`.
pub(crate) fn history_terms(g: &mut Graph, vars: &Vars, h: Var, feedback: &[bool]) -> Result<(Var, Var, Var)> {
    let nh = not(g, vars, h)?;
    let nnh = not(g, vars, nh)?;
    let w = g.constant(Tensor::vector(
        feedback.iter().map(|&liked| if liked { 0.0 } else { 1.0 }).collect(),
    ));
    let terms = g.row_lerp(nh, nnh, w)?;
    Ok((terms, nh, nnh))
}

/// Folds position-major rows `[positions * batch, d]` with OR, left to right.
pub(crate) fn fold_or(g: &mut Graph, vars: &Vars, terms: Var, positions: usize, batch: usize) -> Result<Var> {
    let mut acc = g.slice_rows(terms, 0, batch)?;
    for t in 1..positions {
        let next = g.slice_rows(terms, t * batch, batch)?;
        acc = or(g, vars, acc, next)?;
    }
    Ok(acc)
}

fn mlp_params(p: &mut ParamStore, rng: &mut impl Rng, prefix: &str, fan_in: usize, d: usize) {
    p.insert(&format!("{prefix}_w1"), glorot(rng, fan_in, d));
    p.insert(&format!("{prefix}_b1"), Tensor::zeros(&[d]));
    p.insert(&format!("{prefix}_w2"), glorot(rng, d, d));
    p.insert(&format!("{prefix}_b2"), Tensor::zeros(&[d]));
}

/// Neural-logic sequential recommender.
#[derive(Clone, Debug, PartialEq)]
pub struct NcrModel {
    pub config: NcrConfig,
    pub params: ParamStore,
}

impl NcrModel {
    pub fn new(config: NcrConfig) -> Result<Self> {
        if config.dim == 0 || config.n_items == 0 || config.n_users == 0 {
            return Err(Error::Config("NCR needs positive dim, users and items".into()));
        }
        let d = config.dim;
        let mut rng = seed::rng(config.seed, "ncr-init", 0);
        let mut p = ParamStore::new();
        p.insert(USER_EMB, uniform_init(&mut rng, &[config.n_users, d], 0.1));
        p.insert(ITEM_EMB, uniform_init(&mut rng, &[config.n_items, d], 0.1));
        mlp_params(&mut p, &mut rng, "enc", 2 * d, d);
        mlp_params(&mut p, &mut rng, "not", d, d);
        mlp_params(&mut p, &mut rng, "or", 2 * d, d);
        if config.and_module {
            mlp_params(&mut p, &mut rng, "and", 2 * d, d);
        }
        let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        p.insert(TRUE_VECTOR, Tensor::vector(raw.iter().map(|v| v / norm).collect()));
        p.freeze(TRUE_VECTOR);
        Ok(Self { config, params: p })
    }

    pub fn from_parts(config: NcrConfig, params: ParamStore) -> Result<Self> {
        let model = Self { config, params };
        for name in [USER_EMB, ITEM_EMB, TRUE_VECTOR] {
            model.params.require(name)?;
        }
        if !model.params.is_frozen(TRUE_VECTOR) {
            return Err(Error::Checkpoint("true vector must be frozen".into()));
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn true_vector(&self) -> &[f64] {
        self.params.get(TRUE_VECTOR).expect("true vector present").data()
    }

    /// Registers the module weights and the true vector as constants; the
    /// embedding tables are left out because inference gathers rows directly.
    pub(crate) fn frozen_vars(&self, g: &mut Graph) -> Vars {
        let mut map = BTreeMap::new();
        for (name, t) in self.params.iter() {
            if name == USER_EMB || name == ITEM_EMB {
                continue;
            }
            map.insert(name.to_string(), g.constant(t.clone()));
        }
        Vars(map)
    }

    fn check_user(&self, user: usize) -> Result<()> {
        if user >= self.config.n_users {
            return Err(Error::OutOfRange {
                what: "user",
                index: user,
                size: self.config.n_users,
            });
        }
        Ok(())
    }

    fn check_item(&self, item: usize) -> Result<()> {
        if item >= self.config.n_items {
            return Err(Error::OutOfRange {
                what: "item",
                index: item,
                size: self.config.n_items,
            });
        }
        Ok(())
    }

    /// Gathers embedding rows as a constant `[len, d]` matrix.
    pub(crate) fn rows_const(&self, g: &mut Graph, table: &str, ids: &[usize]) -> Result<Var> {
        let t = self.params.require(table)?;
        let d = self.dim();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            if table == USER_EMB {
                self.check_user(i)?;
            } else {
                self.check_item(i)?;
            }
            data.extend_from_slice(t.row(i));
        }
        Ok(g.constant(Tensor::matrix(ids.len(), d, data)?))
    }

    /// Event vectors for `(user, item)` pairs as a constant-weight graph node.
    pub(crate) fn encode_const(&self, g: &mut Graph, vars: &Vars, users: &[usize], items: &[usize]) -> Result<Var> {
        let u = self.rows_const(g, USER_EMB, users)?;
        let i = self.rows_const(g, ITEM_EMB, items)?;
        encode(g, vars, u, i)
    }

    pub fn encode_event(&self, user: usize, item: usize) -> Result<EventVector> {
        let mut g = Graph::new();
        let vars = self.frozen_vars(&mut g);
        let e = self.encode_const(&mut g, &vars, &[user], &[item])?;
        Ok(EventVector {
            vector: g.value(e).data().to_vec(),
            negated: false,
        })
    }

    fn row_op(&self, inputs: &[&[f64]], f: impl Fn(&mut Graph, &Vars, Vec<Var>) -> Result<Var>) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut g = Graph::new();
        let vars = self.frozen_vars(&mut g);
        let mut vs = Vec::new();
        for x in inputs {
            if x.len() != d {
                return Err(Error::shape("event", &[x.len()], &[d]));
            }
            vs.push(g.constant(Tensor::matrix(1, d, x.to_vec())?));
        }
        let out = f(&mut g, &vars, vs)?;
        Ok(g.value(out).data().to_vec())
    }

    pub fn apply_not(&self, e: &EventVector) -> Result<EventVector> {
        let vector = self.row_op(&[&e.vector], |g, vars, v| not(g, vars, v[0]))?;
        Ok(EventVector {
            vector,
            negated: !e.negated,
        })
    }

    pub fn apply_or(&self, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        self.row_op(&[a, b], |g, vars, v| or(g, vars, v[0], v[1]))
    }

    /// Conjunction module; only available when the model was built with
    /// `and_module`.
    pub fn apply_and(&self, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        self.row_op(&[a, b], |g, vars, v| {
            let x = g.concat(v[0], v[1])?;
            mlp(g, vars, "and", x)
        })
    }

    /// Literal for one history interaction: `e` if liked, `¬e` otherwise.
    pub fn literal(&self, user: usize, item: usize, liked: bool) -> Result<EventVector> {
        let e = self.encode_event(user, item)?;
        if liked {
            Ok(e)
        } else {
            self.apply_not(&e)
        }
    }

    /// Expression vector for raw (non-negated) history events with their
    /// feedback and a target event.
    pub fn build_expression(&self, history: &[(EventVector, bool)], target: &EventVector) -> Result<Vec<f64>> {
        if history.is_empty() {
            return Err(Error::Contract("expression needs at least one history literal".into()));
        }
        let mut acc: Option<Vec<f64>> = None;
        for (e, liked) in history {
            let ne = self.apply_not(e)?;
            let term = if *liked { ne } else { self.apply_not(&ne)? };
            acc = Some(match acc {
                None => term.vector,
                Some(prev) => self.apply_or(&prev, &term.vector)?,
            });
        }
        self.apply_or(&acc.expect("non-empty"), &target.vector)
    }

    /// `(1 + cos(expression, T)) / 2`.
    pub fn score(&self, expression: &[f64]) -> Result<f64> {
        let t = self.true_vector();
        if expression.len() != t.len() {
            return Err(Error::shape("score", &[expression.len()], &[t.len()]));
        }
        let mut g = Graph::new();
        let e = g.constant(Tensor::vector(expression.to_vec()));
        let tv = g.constant(Tensor::vector(t.to_vec()));
        let c = g.cosine(e, tv)?;
        Ok((1.0 + g.value(c).item()) / 2.0)
    }

    /// Scores many candidates against one history in a single graph.
    pub fn score_candidates(&self, user: usize, history: &[usize], feedback: &[bool], candidates: &[usize]) -> Result<Vec<f64>> {
        if history.is_empty() || history.len() != feedback.len() {
            return Err(Error::Contract(format!(
                "history has {} items and {} feedback bits",
                history.len(),
                feedback.len()
            )));
        }
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let n = history.len();
        let c = candidates.len();
        let mut g = Graph::new();
        let vars = self.frozen_vars(&mut g);
        let items: Vec<usize> = history.iter().chain(candidates).copied().collect();
        let ev = self.encode_const(&mut g, &vars, &vec![user; n + c], &items)?;
        let h = g.slice_rows(ev, 0, n)?;
        let cand = g.slice_rows(ev, n, c)?;
        let (terms, _, _) = history_terms(&mut g, &vars, h, feedback)?;
        let acc = fold_or(&mut g, &vars, terms, n, 1)?;
        let acc_c = g.gather_rows(acc, &vec![0; c])?;
        let expr = or(&mut g, &vars, acc_c, cand)?;
        let s = score_rows(&mut g, &vars, expr)?;
        Ok(g.value(s).data().to_vec())
    }

    /// Candidates (deduplicated) in descending score order, ties by
    /// ascending item id.
    pub fn rank_candidates(&self, user: usize, history: &[usize], feedback: &[bool], candidates: &[usize]) -> Result<Vec<(usize, f64)>> {
        if candidates.is_empty() {
            return Err(Error::Contract("no candidates to rank".into()));
        }
        let mut unique = candidates.to_vec();
        unique.sort_unstable();
        unique.dedup();
        let scores = self.score_candidates(user, history, feedback, &unique)?;
        Ok(crate::anchor::order_by_score(unique.into_iter().zip(scores).collect()))
    }

    /// Mean `‖¬¬e − e‖²` over the given interactions.
    pub fn double_negation_gap(&self, users: &[usize], items: &[usize]) -> Result<f64> {
        let mut g = Graph::new();
        let vars = self.frozen_vars(&mut g);
        let e = self.encode_const(&mut g, &vars, users, items)?;
        let ne = not(&mut g, &vars, e)?;
        let nne = not(&mut g, &vars, ne)?;
        let diff = g.sub(nne, e)?;
        let s = g.sum_sq(diff);
        Ok(g.value(s).item() / users.len().max(1) as f64)
    }

    /// Names of every parameter that should receive gradients.
    pub fn trainable_names(&self) -> Vec<String> {
        self.params
            .names()
            .filter(|n| !self.params.is_frozen(n))
            .filter(|n| self.config.and_module || !n.starts_with("and_"))
            .map(str::to_string)
            .collect()
    }
}

/// `-ln σ(β (pos − neg))`, the per-pair ranking loss without regularizers.
pub fn pairwise_loss(pos_score: f64, neg_score: f64, beta: f64) -> f64 {
    let x = beta * (pos_score - neg_score);
    -(x.min(0.0) - (-x.abs()).exp().ln_1p())
}
