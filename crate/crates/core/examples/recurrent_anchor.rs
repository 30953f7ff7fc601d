//! Trains the gated recurrent anchor on planted-logic data, compares it with
//! an untrained copy and shows that flipping the trigger's feedback changes
//! its top item.
//!
//! cargo run --release --example recurrent_anchor -- [epochs]

use ccr::anchor::{rank_top_k, train_anchor, RecurrentConfig, RecurrentModel, TrainConfig};
use ccr::data::synthetic::{generate_planted_logic_corpus, PlantedLogicConfig, RuleTable};
use ccr::data::{build_sequences, split_leave_one_out, windowize};
use ccr::eval::{evaluate_model, interacted_items};

fn main() -> ccr::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let corpus = PlantedLogicConfig {
        noise_rate: 0.0,
        episodes: 6,
        max_gap: 1,
        ..Default::default()
    };
    let rules = RuleTable::random(corpus.n_items, corpus.n_triggers, corpus.seed)?;
    let sequences = build_sequences(&generate_planted_logic_corpus(&corpus, &rules)?)?;
    let split = split_leave_one_out(&sequences);
    let train = windowize(&split.train, 5);
    let interacted = interacted_items(&sequences);

    let mut cfg = RecurrentConfig::new(corpus.n_items);
    cfg.dim = 32;
    let mut model = RecurrentModel::new(cfg)?;
    let before = evaluate_model(&model, &split.test, &interacted, 5, &[10], 0)?;
    let report = train_anchor(&mut model, &train, &TrainConfig { lr: 0.005, epochs, ..Default::default() })?;
    let after = evaluate_model(&model, &split.test, &interacted, 5, &[10], 0)?;
    println!("loss {:.4} -> {:.4}", report.loss[0], report.loss.last().unwrap());
    println!("HR@10 untrained {:.3}, trained {:.3}", before.hr[&10], after.hr[&10]);

    let all: Vec<usize> = (0..corpus.n_items).collect();
    let mut shown = 0;
    for ex in train.iter().filter(|e| rules.predict(&e.history, &e.history_feedback) == Some(e.target)) {
        let pos = ex.history.iter().rposition(|i| rules.triggers().contains(i)).unwrap();
        let mut flipped = ex.history_feedback.clone();
        flipped[pos] = !flipped[pos];
        let top = rank_top_k(&model, ex.user_id, &ex.history, &ex.history_feedback, &all, 1)?[0];
        let top_flipped = rank_top_k(&model, ex.user_id, &ex.history, &flipped, &all, 1)?[0];
        println!(
            "trigger {} {}: top {top} (rule says {}); flipped: top {top_flipped} (rule says {})",
            ex.history[pos],
            if ex.history_feedback[pos] { "liked" } else { "disliked" },
            ex.target,
            rules.consequence(ex.history[pos], flipped[pos]).unwrap()
        );
        shown += 1;
        if shown == 5 {
            break;
        }
    }
    Ok(())
}
