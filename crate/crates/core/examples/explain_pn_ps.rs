//! Explains an anchor's top-N recommendations with counterfactual feedback
//! flips and scores the explanations by necessity and sufficiency.
//!
//! cargo run --release --example explain_pn_ps -- [top_n] [reverse|remove]

use ccr::anchor::{train_anchor, TrainConfig};
use ccr::data::synthetic::{generate_planted_logic_corpus, PlantedLogicConfig, RuleTable};
use ccr::data::{build_sequences, split_leave_one_out, windowize};
use ccr::eval::interacted_items;
use ccr::explain::{contexts_from_heldout, explain_and_score, InterventionMode};
use ccr::logic::{NcrConfig, NcrModel};
use ccr::sampler::SamplerConfig;

fn main() -> ccr::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n = args.first().and_then(|s| s.parse().ok()).unwrap_or(1);
    let mode = match args.get(1).map(String::as_str) {
        Some("remove") => InterventionMode::Remove,
        _ => InterventionMode::Reverse,
    };

    let corpus = PlantedLogicConfig {
        n_users: 300,
        noise_rate: 0.0,
        episodes: 6,
        max_gap: 1,
        ..Default::default()
    };
    let rules = RuleTable::random(corpus.n_items, corpus.n_triggers, corpus.seed)?;
    let sequences = build_sequences(&generate_planted_logic_corpus(&corpus, &rules)?)?;
    let split = split_leave_one_out(&sequences);
    let train = windowize(&split.train, 5);

    let train_model = |seed| -> ccr::Result<NcrModel> {
        let mut cfg = NcrConfig::new(corpus.n_users, corpus.n_items);
        cfg.dim = 32;
        cfg.seed = seed;
        let mut m = NcrModel::new(cfg)?;
        train_anchor(&mut m, &train, &TrainConfig { lr: 0.002, epochs: 20, seed, ..Default::default() })?;
        Ok(m)
    };
    let sampler = train_model(1)?;
    let anchor = train_model(2)?;

    let contexts = contexts_from_heldout(&split.test, &interacted_items(&sequences), corpus.n_items, 5, 0)?;
    let (records, report) = explain_and_score(&sampler, &anchor, &contexts, n, &SamplerConfig::default(), mode, 0)?;
    for r in records.iter().take(5) {
        let rule = rules.rule_for_consequence(r.recommended_item);
        println!(
            "user {} item {}: explanation {:?}, alternative {:?}{}",
            r.user_id,
            r.recommended_item,
            r.explanation_items,
            r.alternative_item,
            rule.map(|r| format!(" (planted trigger {})", r.trigger)).unwrap_or_default()
        );
    }
    println!(
        "N = K = {n}, {mode:?}: {} records for {} users, PN {:?}, PS {:?}, F_NS {:?}",
        report.nonempty, report.evaluated, report.pn, report.ps, report.f_ns
    );
    Ok(())
}
