//! Trains the neural-logic model on a noiseless planted-logic corpus and
//! reports held-out ranking quality.
//!
//! cargo run --release --example train_ncr -- [epochs] [dim] [lr] [noise_rate]

use ccr::anchor::{train_anchor, TrainConfig};
use ccr::data::synthetic::{generate_planted_logic_corpus, PlantedLogicConfig, RuleTable};
use ccr::data::{build_sequences, split_leave_one_out, windowize, DEFAULT_WINDOW};
use ccr::eval::{evaluate_model, interacted_items, DEFAULT_KS};
use ccr::logic::{NcrConfig, NcrModel};

fn main() -> ccr::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs = args.first().and_then(|s| s.parse().ok()).unwrap_or(20);
    let dim = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let lr = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.002);
    let noise = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.0);

    let corpus_cfg = PlantedLogicConfig {
        noise_rate: noise,
        episodes: 6,
        max_gap: 1,
        ..PlantedLogicConfig::default()
    };
    let rules = RuleTable::random(corpus_cfg.n_items, corpus_cfg.n_triggers, corpus_cfg.seed)?;
    let data = generate_planted_logic_corpus(&corpus_cfg, &rules)?;
    let sequences = build_sequences(&data)?;
    let split = split_leave_one_out(&sequences);
    let train = windowize(&split.train, DEFAULT_WINDOW);
    println!("{} users, {} training windows, {} test users", data.n_users(), train.len(), split.test.len());

    let mut cfg = NcrConfig::new(data.n_users(), data.n_items());
    cfg.dim = dim;
    let mut model = NcrModel::new(cfg)?;
    let report = train_anchor(
        &mut model,
        &train,
        &TrainConfig { lr, epochs, ..TrainConfig::default() },
    )?;
    for (e, (l, r)) in report.loss.iter().zip(&report.logic_reg).enumerate() {
        println!("epoch {:>3}  loss {l:.4}  double-negation gap {r:.4}", e + 1);
    }
    let interacted = interacted_items(&sequences);
    let metrics = evaluate_model(&model, &split.test, &interacted, DEFAULT_WINDOW, &DEFAULT_KS, 0)?;
    for k in DEFAULT_KS {
        println!("HR@{k} {:.3}  NDCG@{k} {:.3}", metrics.hr[&k], metrics.ndcg[&k]);
    }
    Ok(())
}
