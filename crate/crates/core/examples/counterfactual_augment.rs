//! Trains an NCR sampler, searches each training window for a minimal
//! feedback flip that changes the next item, and prints a few of the
//! counterfactual examples that pass the confidence filter.
//!
//! cargo run --release --example counterfactual_augment -- [alpha] [kappa]

use ccr::anchor::{train_anchor, TrainConfig};
use ccr::data::synthetic::{generate_planted_logic_corpus, PlantedLogicConfig, RuleTable};
use ccr::data::{build_sequences, split_leave_one_out, windowize};
use ccr::logic::{NcrConfig, NcrModel};
use ccr::sampler::{augment_dataset, SamplerConfig};

fn main() -> ccr::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut sampler_cfg = SamplerConfig::default();
    if let Some(a) = args.first().and_then(|s| s.parse().ok()) {
        sampler_cfg.alpha = a;
    }
    if let Some(k) = args.get(1).and_then(|s| s.parse().ok()) {
        sampler_cfg.kappa = k;
    }

    let corpus = PlantedLogicConfig {
        n_users: 300,
        episodes: 6,
        max_gap: 1,
        ..Default::default()
    };
    let rules = RuleTable::random(corpus.n_items, corpus.n_triggers, corpus.seed)?;
    let sequences = build_sequences(&generate_planted_logic_corpus(&corpus, &rules)?)?;
    let train = windowize(&split_leave_one_out(&sequences).train, 5);

    let mut cfg = NcrConfig::new(corpus.n_users, corpus.n_items);
    cfg.dim = 32;
    let mut sampler = NcrModel::new(cfg)?;
    train_anchor(&mut sampler, &train, &TrainConfig { lr: 0.002, epochs: 20, ..Default::default() })?;

    let (accepted, report) = augment_dataset(&train, &sampler, &sampler_cfg, 0)?;
    println!("alpha {} kappa {}: {report:?}", sampler_cfg.alpha, sampler_cfg.kappa);
    for cf in accepted.iter().take(5) {
        let orig = train
            .iter()
            .find(|o| o.user_id == cf.user_id && o.history == cf.history)
            .expect("every counterfactual comes from a training window");
        let flips: Vec<usize> = (0..cf.history.len())
            .filter(|&t| cf.history_feedback[t] != orig.history_feedback[t])
            .map(|t| cf.history[t])
            .collect();
        println!(
            "user {}: flipping {flips:?} turns next item {} into {} (confidence {:.3}, rules predict {:?} for the new feedback)",
            cf.user_id,
            orig.target,
            cf.target,
            cf.confidence,
            rules.predict(&cf.history, &cf.history_feedback)
        );
    }
    Ok(())
}
