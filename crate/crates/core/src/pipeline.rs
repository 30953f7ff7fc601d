//! End-to-end orchestration: prepare the data, pre-train the sampler and
//! the anchor, augment, re-optimize the anchor, evaluate and explain.
//!
//! Every stage reads and writes artifacts under `out_dir`, so running the
//! stages one at a time (as the command-line tool does) gives the same
//! files as [`run_pipeline`].
//!
//! | stage | artifacts |
//! |---|---|
//! | prepare | `corpus.tsv`, `rules.json` (synthetic only), `sequences.json`, `split.json`, `train.jsonl`, `split_manifest.json` |
//! | train sampler | `sampler.ckpt`, `sampler_loss.csv` |
//! | train anchor | `anchor.ckpt`, `anchor_loss.csv`; round `r`: `anchor_round{r}.ckpt`, `anchor_round{r}_loss.csv` |
//! | augment | `augmented_round{r}.jsonl`, `augmentation_report_round{r}.json` |
//! | evaluate | `metrics_baseline.json`, `metrics_round{r}.json`, `metrics.json`, `round_metrics.csv` |
//! | explain | `explanations_top{N}.json`, `pnps_top{N}.json` |
//!
//! `manifest.json` snapshots the config, the SHA-256 of every artifact and
//! per-stage wall-clock seconds.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::anchor::{train_anchor, AnchorKind, AnchorModel, RecurrentConfig, RecurrentModel, Recommender, TrainConfig};
use crate::data::synthetic::{generate_planted_logic_corpus, PlantedLogicConfig, RuleTable};
use crate::data::{
    build_sequences, load_examples, load_interactions, save_examples, split_leave_one_out, windowize, DatasetSplit,
    Interactions, SplitManifest, TrainingExample, UserSequence,
};
use crate::diffcore::checkpoint;
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, interacted_items, RankingMetrics, N_SAMPLED_NEGATIVES};
use crate::explain::{contexts_from_heldout, explain_and_score, InterventionMode, PnPsReport};
use crate::logic::{NcrConfig, NcrModel};
use crate::sampler::{augment_dataset, AugmentationReport, SamplerConfig};
use crate::seed;

/// Planted-logic corpus shape. The corpus seed is the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub n_triggers: usize,
    pub episodes: usize,
    pub max_gap: usize,
    pub noise_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_users: 500,
            n_items: 200,
            n_triggers: 30,
            episodes: 6,
            max_gap: 1,
            noise_rate: 0.2,
        }
    }
}

impl SyntheticSpec {
    pub fn corpus_config(&self, seed: u64) -> PlantedLogicConfig {
        PlantedLogicConfig {
            seed,
            n_users: self.n_users,
            n_items: self.n_items,
            n_triggers: self.n_triggers,
            episodes: self.episodes,
            max_gap: self.max_gap,
            noise_rate: self.noise_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic(SyntheticSpec),
    /// A MovieLens `u.data` style tab-separated rating log.
    Movielens { path: PathBuf },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives: usize,
    pub beta: f64,
    pub lambda_logic: f64,
    pub lambda_w: f64,
    /// Epochs of anchor re-optimization per augmentation round.
    pub retrain_epochs: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            lr: 0.002,
            epochs: 20,
            batch_size: crate::anchor::DEFAULT_BATCH_SIZE,
            negatives: 1,
            beta: crate::logic::DEFAULT_BETA,
            lambda_logic: crate::logic::DEFAULT_LAMBDA_LOGIC,
            lambda_w: crate::logic::DEFAULT_LAMBDA_W,
            retrain_epochs: 10,
        }
    }
}

impl TrainSettings {
    fn config(&self, epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs,
            batch_size: self.batch_size,
            negatives: self.negatives,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    /// Top-N scopes to explain; each also serves as the PN/PS cutoff.
    pub top_n: Vec<usize>,
    pub mode: InterventionMode,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        Self {
            top_n: vec![1, 5],
            mode: InterventionMode::Reverse,
        }
    }
}

/// A full run. Only `seed` is required; everything else has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_anchor")]
    pub anchor: AnchorKind,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default = "default_ks")]
    pub eval_ks: Vec<usize>,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default)]
    pub explain: ExplainSettings,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_window() -> usize {
    crate::data::DEFAULT_WINDOW
}
fn default_dim() -> usize {
    32
}
fn default_anchor() -> AnchorKind {
    AnchorKind::Ncr
}
fn default_ks() -> Vec<usize> {
    crate::eval::DEFAULT_KS.to_vec()
}
fn default_rounds() -> usize {
    1
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("ccr-run")
}

impl RunConfig {
    /// Defaults everywhere except the seed.
    pub fn with_seed(seed: u64) -> Self {
        Self::from_value(serde_json::json!({ "seed": seed })).expect("defaults are valid")
    }

    /// Parses and validates a JSON config. Parse failures are config errors.
    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_value(read_config_value(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.window == 0 || self.dim == 0 {
            return bad("window and dim must be positive".into());
        }
        if self.rounds == 0 {
            return bad("rounds must be at least 1".into());
        }
        let t = &self.train;
        if !(t.lr > 0.0) || t.batch_size == 0 || t.negatives == 0 || t.epochs == 0 {
            return bad("lr, epochs, batch_size and negatives must be positive".into());
        }
        if !(t.beta > 0.0) || t.lambda_logic < 0.0 || t.lambda_w < 0.0 {
            return bad("beta must be positive and the regularizer weights non-negative".into());
        }
        let cutoff_ok = |k: &usize| (1..=N_SAMPLED_NEGATIVES + 1).contains(k);
        if self.eval_ks.is_empty() || !self.eval_ks.iter().all(cutoff_ok) {
            return bad(format!("eval_ks must be non-empty values in 1..={}", N_SAMPLED_NEGATIVES + 1));
        }
        if self.explain.top_n.is_empty() || !self.explain.top_n.iter().all(cutoff_ok) {
            return bad(format!("explain.top_n must be non-empty values in 1..={}", N_SAMPLED_NEGATIVES + 1));
        }
        self.sampler.validate()?;
        match &self.dataset {
            DatasetSpec::Movielens { path } if !path.is_file() => bad(format!("dataset {} not found", path.display())),
            DatasetSpec::Synthetic(s) if !(0.0..=1.0).contains(&s.noise_rate) => {
                bad(format!("noise_rate {} outside [0, 1]", s.noise_rate))
            }
            _ => Ok(()),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn anchor_path(&self, round: usize) -> PathBuf {
        if round == 0 {
            self.path("anchor.ckpt")
        } else {
            self.path(&format!("anchor_round{round}.ckpt"))
        }
    }
}

pub fn read_config_value(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|_| Error::Config(format!("cannot read config {}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Always an NCR model: the Δ search needs the NOT module.
    Sampler,
    Anchor,
}

/// The outputs of the prepare stage, as held in memory.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub sequences: Vec<UserSequence>,
    pub split: DatasetSplit,
    pub train: Vec<TrainingExample>,
    pub manifest: SplitManifest,
    pub rules: Option<RuleTable>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => e,
        other => Error::Stage {
            stage: name,
            source: Box::new(other),
        },
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write(path, s)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))
}

/// Loads or generates the interaction log, splits it and windowizes the
/// training sequences.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    stage("prepare", prepare_inner(cfg))
}

fn prepare_inner(cfg: &RunConfig) -> Result<Prepared> {
    ensure_out_dir(cfg)?;
    let (data, rules): (Interactions, Option<RuleTable>) = match &cfg.dataset {
        DatasetSpec::Synthetic(spec) => {
            let rules = RuleTable::random(spec.n_items, spec.n_triggers, cfg.seed)?;
            let data = generate_planted_logic_corpus(&spec.corpus_config(cfg.seed), &rules)?;
            (data, Some(rules))
        }
        DatasetSpec::Movielens { path } => (load_interactions(path)?, None),
    };
    let sequences = build_sequences(&data)?;
    let split = split_leave_one_out(&sequences);
    let train = windowize(&split.train, cfg.window);
    let manifest = SplitManifest {
        seed: cfg.seed,
        window: cfg.window,
        n_users: data.n_users(),
        n_items: data.n_items(),
        n_interactions: data.len(),
        train_sequences: split.train.len(),
        train_examples: train.len(),
        validation: split.validation.len(),
        test: split.test.len(),
    };
    write(&cfg.path("corpus.tsv"), data.to_tsv())?;
    if let Some(r) = &rules {
        write_json(&cfg.path("rules.json"), r)?;
    }
    write_json(&cfg.path("sequences.json"), &sequences)?;
    write_json(&cfg.path("split.json"), &split)?;
    save_examples(&cfg.path("train.jsonl"), &train)?;
    write_json(&cfg.path("split_manifest.json"), &manifest)?;
    Ok(Prepared {
        sequences,
        split,
        train,
        manifest,
        rules,
    })
}

/// Reads the prepare stage's artifacts back.
pub fn load_prepared(cfg: &RunConfig) -> Result<Prepared> {
    let rules_path = cfg.path("rules.json");
    Ok(Prepared {
        sequences: read_json(&cfg.path("sequences.json"))?,
        split: read_json(&cfg.path("split.json"))?,
        train: load_examples(&cfg.path("train.jsonl"))?,
        manifest: read_json(&cfg.path("split_manifest.json"))?,
        rules: if rules_path.is_file() { Some(read_json(&rules_path)?) } else { None },
    })
}

fn ncr_config(cfg: &RunConfig, data: &Prepared, init_seed: u64) -> NcrConfig {
    let mut c = NcrConfig::new(data.manifest.n_users, data.manifest.n_items);
    c.dim = cfg.dim;
    c.window = cfg.window;
    c.beta = cfg.train.beta;
    c.lambda_logic = cfg.train.lambda_logic;
    c.lambda_w = cfg.train.lambda_w;
    c.seed = init_seed;
    c
}

fn fresh_anchor(cfg: &RunConfig, data: &Prepared) -> Result<AnchorModel> {
    let init = seed::derive(cfg.seed, "anchor-init", 0);
    Ok(match cfg.anchor {
        AnchorKind::Ncr => AnchorModel::Ncr(NcrModel::new(ncr_config(cfg, data, init))?),
        AnchorKind::Recurrent => {
            let mut c = RecurrentConfig::new(data.manifest.n_items);
            c.dim = cfg.dim;
            c.lambda_w = cfg.train.lambda_w;
            c.seed = init;
            AnchorModel::Recurrent(RecurrentModel::new(c)?)
        }
    })
}

/// Pre-trains the sampler on the original examples.
pub fn train_sampler(cfg: &RunConfig, data: &Prepared) -> Result<NcrModel> {
    stage("train-sampler", (|| {
        ensure_out_dir(cfg)?;
        let mut model = NcrModel::new(ncr_config(cfg, data, seed::derive(cfg.seed, "sampler-init", 0)))?;
        let tc = cfg.train.config(cfg.train.epochs, seed::derive(cfg.seed, "sampler-train", 0));
        let report = train_anchor(&mut model, &data.train, &tc)?;
        write(&cfg.path("sampler_loss.csv"), report.to_csv())?;
        AnchorModel::Ncr(model.clone()).save(&cfg.path("sampler.ckpt"))?;
        Ok(model)
    })())
}

pub fn load_sampler(cfg: &RunConfig) -> Result<NcrModel> {
    match AnchorModel::load(&cfg.path("sampler.ckpt"))? {
        AnchorModel::Ncr(m) => Ok(m),
        AnchorModel::Recurrent(_) => Err(Error::Checkpoint("sampler checkpoint is not an NCR model".into())),
    }
}

pub fn load_anchor(cfg: &RunConfig, round: usize) -> Result<AnchorModel> {
    let model = AnchorModel::load(&cfg.anchor_path(round))?;
    if model.kind() != cfg.anchor {
        return Err(Error::Config(format!(
            "config asks for a {} anchor but the checkpoint holds {}",
            cfg.anchor.tag(),
            model.kind().tag()
        )));
    }
    Ok(model)
}

/// Round 0 pre-trains a fresh anchor on the original examples. Round `r`
/// continues from the round `r − 1` anchor on the originals plus every
/// counterfactual accepted in rounds `1..=r`.
pub fn train_anchor_round(cfg: &RunConfig, data: &Prepared, round: usize) -> Result<AnchorModel> {
    stage("train-anchor", (|| {
        ensure_out_dir(cfg)?;
        let train_seed = seed::derive(cfg.seed, "anchor-train", round as u64);
        let (mut model, examples, epochs) = if round == 0 {
            (fresh_anchor(cfg, data)?, data.train.clone(), cfg.train.epochs)
        } else {
            let mut all = data.train.clone();
            for r in 1..=round {
                all.extend(load_examples(&cfg.path(&format!("augmented_round{r}.jsonl")))?);
            }
            (load_anchor(cfg, round - 1)?, all, cfg.train.retrain_epochs)
        };
        let report = if epochs == 0 {
            Default::default()
        } else {
            train_anchor(&mut model, &examples, &cfg.train.config(epochs, train_seed))?
        };
        let stem = if round == 0 { "anchor".to_string() } else { format!("anchor_round{round}") };
        write(&cfg.path(&format!("{stem}_loss.csv")), report.to_csv())?;
        model.save(&cfg.anchor_path(round))?;
        Ok(model)
    })())
}

/// Runs the sampler over round `r`'s inputs (the originals for round 1,
/// the previous round's counterfactuals afterwards) and keeps what passes
/// the κ filter.
pub fn augment(cfg: &RunConfig, data: &Prepared, sampler: &NcrModel, round: usize) -> Result<(Vec<TrainingExample>, AugmentationReport)> {
    stage("augment", (|| {
        if round == 0 {
            return Err(Error::Config("augmentation rounds start at 1".into()));
        }
        let inputs = if round == 1 {
            data.train.clone()
        } else {
            load_examples(&cfg.path(&format!("augmented_round{}.jsonl", round - 1)))?
        };
        let (accepted, report) = if inputs.is_empty() {
            (Vec::new(), AugmentationReport::default())
        } else {
            augment_dataset(&inputs, sampler, &cfg.sampler, seed::derive(cfg.seed, "augment", round as u64))?
        };
        save_examples(&cfg.path(&format!("augmented_round{round}.jsonl")), &accepted)?;
        write_json(&cfg.path(&format!("augmentation_report_round{round}.json")), &report)?;
        Ok((accepted, report))
    })())
}

fn metrics_name(round: usize) -> String {
    if round == 0 {
        "metrics_baseline.json".into()
    } else {
        format!("metrics_round{round}.json")
    }
}

/// Test-set NDCG/HR of the round-`r` anchor (0 = baseline). Also rebuilds
/// the per-round summary files from every metrics file present.
pub fn evaluate(cfg: &RunConfig, data: &Prepared, round: usize) -> Result<RankingMetrics> {
    stage("evaluate", (|| {
        let anchor = load_anchor(cfg, round)?;
        let metrics = evaluate_model(
            &anchor,
            &data.split.test,
            &interacted_items(&data.sequences),
            cfg.window,
            &cfg.eval_ks,
            cfg.seed,
        )?;
        let json = metrics.to_json(&[
            ("round", round.into()),
            ("anchor", anchor.kind().tag().into()),
            ("anchor_checksum", anchor.checksum()?.into()),
        ]);
        write_json(&cfg.path(&metrics_name(round)), &json)?;
        write_round_summary(cfg)?;
        Ok(metrics)
    })())
}

fn write_round_summary(cfg: &RunConfig) -> Result<()> {
    let mut rows = Vec::new();
    for round in 0..=cfg.rounds {
        let p = cfg.path(&metrics_name(round));
        if p.is_file() {
            rows.push((round, read_json::<serde_json::Value>(&p)?));
        }
    }
    let mut csv = String::from("round");
    for k in &cfg.eval_ks {
        csv.push_str(&format!(",ndcg@{k},hr@{k}"));
    }
    csv.push('\n');
    for (round, m) in &rows {
        csv.push_str(&if *round == 0 { "baseline".to_string() } else { round.to_string() });
        for k in &cfg.eval_ks {
            let entry = &m[k.to_string()];
            csv.push_str(&format!(",{},{}", entry["ndcg"], entry["hr"]));
        }
        csv.push('\n');
    }
    write(&cfg.path("round_metrics.csv"), csv)?;
    let summary: serde_json::Map<String, serde_json::Value> = rows
        .into_iter()
        .map(|(r, m)| (if r == 0 { "baseline".to_string() } else { format!("round{r}") }, m))
        .collect();
    write_json(&cfg.path("metrics.json"), &summary)
}

/// The most re-optimized anchor on disk, up to `cfg.rounds`.
pub fn latest_anchor_round(cfg: &RunConfig) -> Result<usize> {
    (0..=cfg.rounds)
        .rev()
        .find(|&r| cfg.anchor_path(r).is_file())
        .ok_or_else(|| Error::Contract("no trained anchor found; run `train --role anchor` first".into()))
}

/// Explanations and PN/PS for each configured top-N, using the latest
/// anchor and the sampler.
pub fn explain(cfg: &RunConfig, data: &Prepared) -> Result<Vec<PnPsReport>> {
    stage("explain", (|| {
        let sampler = load_sampler(cfg)?;
        let anchor = load_anchor(cfg, latest_anchor_round(cfg)?)?;
        let contexts = contexts_from_heldout(
            &data.split.test,
            &interacted_items(&data.sequences),
            data.manifest.n_items,
            cfg.window,
            cfg.seed,
        )?;
        let mut reports = Vec::new();
        for &n in &cfg.explain.top_n {
            let (records, report) = explain_and_score(
                &sampler,
                &anchor,
                &contexts,
                n,
                &cfg.sampler,
                cfg.explain.mode,
                seed::derive(cfg.seed, "explain", n as u64),
            )?;
            write_json(&cfg.path(&format!("explanations_top{n}.json")), &records)?;
            write_json(&cfg.path(&format!("pnps_top{n}.json")), &report)?;
            reports.push(report);
        }
        Ok(reports)
    })())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    /// File name → SHA-256 for every artifact in the output directory.
    pub artifacts: BTreeMap<String, String>,
    /// Wall-clock seconds per stage, most recent run of each.
    pub stage_seconds: BTreeMap<String, f64>,
}

/// Adds a stage timing to `manifest.json` and refreshes the artifact
/// checksums.
pub fn record_stage(cfg: &RunConfig, name: &str, seconds: f64) -> Result<RunManifest> {
    let path = cfg.path("manifest.json");
    let mut stage_seconds = if path.is_file() {
        read_json::<RunManifest>(&path).map(|m| m.stage_seconds).unwrap_or_default()
    } else {
        BTreeMap::new()
    };
    stage_seconds.insert(name.to_string(), seconds);
    let mut artifacts = BTreeMap::new();
    let entries = std::fs::read_dir(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&cfg.out_dir, e))?;
        let file_name = entry.file_name().to_string_lossy().into_owned();
        if file_name == "manifest.json" || !entry.path().is_file() {
            continue;
        }
        let bytes = std::fs::read(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        artifacts.insert(file_name, checkpoint::checksum(&bytes));
    }
    let manifest = RunManifest {
        config: cfg.clone(),
        artifacts,
        stage_seconds,
    };
    write_json(&path, &manifest)?;
    Ok(manifest)
}

/// Runs `f`, then records its wall-clock time in the manifest.
pub fn timed<T>(cfg: &RunConfig, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f()?;
    record_stage(cfg, name, t.elapsed().as_secs_f64())?;
    Ok(out)
}

/// prepare → train sampler → train anchor → evaluate baseline → for each
/// round: augment, re-optimize, evaluate → explain.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    ensure_out_dir(cfg)?;
    let data = timed(cfg, "prepare", || prepare(cfg))?;
    let sampler = timed(cfg, "train-sampler", || train_sampler(cfg, &data))?;
    timed(cfg, "train-anchor", || train_anchor_round(cfg, &data, 0))?;
    timed(cfg, "evaluate", || evaluate(cfg, &data, 0))?;
    for round in 1..=cfg.rounds {
        timed(cfg, &format!("augment-round{round}"), || augment(cfg, &data, &sampler, round))?;
        timed(cfg, &format!("train-anchor-round{round}"), || train_anchor_round(cfg, &data, round))?;
        timed(cfg, &format!("evaluate-round{round}"), || evaluate(cfg, &data, round))?;
    }
    timed(cfg, "explain", || explain(cfg, &data))?;
    record_stage(cfg, "pipeline", 0.0).map(|mut m| {
        m.stage_seconds.remove("pipeline");
        m
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_required() {
        let err = RunConfig::from_value(serde_json::json!({ "window": 3 })).unwrap_err();
        assert!(err.is_config(), "{err}");
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        assert!(RunConfig::from_value(serde_json::json!({ "seed": 1, "windw": 3 })).unwrap_err().is_config());
        assert!(RunConfig::from_value(serde_json::json!({ "seed": 1, "rounds": 0 })).unwrap_err().is_config());
        assert!(RunConfig::from_value(serde_json::json!({ "seed": 1, "sampler": { "kappa": 1.5 } }))
            .unwrap_err()
            .is_config());
        let missing = serde_json::json!({ "seed": 1, "dataset": { "kind": "movielens", "path": "/nonexistent/u.data" } });
        assert!(RunConfig::from_value(missing).unwrap_err().is_config());
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::with_seed(7);
        assert_eq!(cfg.rounds, 1);
        assert_eq!(cfg.anchor, AnchorKind::Ncr);
        let back = RunConfig::from_value(serde_json::to_value(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
