//! Runs the counterfactual search once and shows how many examples the
//! confidence threshold keeps as it rises from 0 to 1.
//!
//! cargo run --release --example kappa_sweep

use ccr::anchor::{train_anchor, TrainConfig};
use ccr::data::synthetic::{generate_planted_logic_corpus, PlantedLogicConfig, RuleTable};
use ccr::data::{build_sequences, split_leave_one_out, windowize};
use ccr::logic::{NcrConfig, NcrModel};
use ccr::sampler::{filter_by_kappa, generate_counterfactuals, SamplerConfig};

fn main() -> ccr::Result<()> {
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

    let outcomes = generate_counterfactuals(&train, &sampler, &SamplerConfig::default(), 0)?;
    println!("kappa  accepted  below_kappa  (of {} attempts)", outcomes.len());
    for i in 0..=10 {
        let kappa = i as f64 / 10.0;
        let (_, r) = filter_by_kappa(&outcomes, kappa);
        println!("{kappa:>5.1}  {:>8}  {:>11}", r.accepted, r.below_kappa);
    }
    let (_, r) = filter_by_kappa(&outcomes, 0.0);
    println!("never generated: {} with an empty flip set, {} with an unchanged next item", r.zero_delta, r.unchanged_target);
    Ok(())
}
