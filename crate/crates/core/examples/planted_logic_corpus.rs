//! Generates the planted-logic corpus, where a trigger item liked or
//! disliked determines the next item, and shows a rule at work.
//!
//! cargo run --release --example planted_logic_corpus -- [noise_rate]

use ccr::data::synthetic::{generate_planted_logic_corpus, PlantedLogicConfig, RuleTable};
use ccr::data::build_sequences;

fn main() -> ccr::Result<()> {
    let noise_rate = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.2);
    let cfg = PlantedLogicConfig {
        noise_rate,
        episodes: 6,
        max_gap: 1,
        ..Default::default()
    };
    let rules = RuleTable::random(cfg.n_items, cfg.n_triggers, cfg.seed)?;
    for &t in rules.triggers().iter().take(3) {
        println!(
            "rule: liked {t} -> {}, disliked {t} -> {}",
            rules.consequence(t, true).unwrap(),
            rules.consequence(t, false).unwrap()
        );
    }

    let log = generate_planted_logic_corpus(&cfg, &rules)?;
    println!("{} interactions for {} users over {} items (noise {noise_rate})", log.len(), log.n_users(), log.n_items());

    let sequences = build_sequences(&log)?;
    let seq = &sequences[0];
    println!("user {}:", seq.user_id);
    for (p, (&item, &liked)) in seq.items.iter().zip(&seq.feedback).enumerate() {
        let note = match rules.rule_for_consequence(item) {
            Some(r) if p > 0 && seq.items[..p].contains(&r.trigger) => format!("  <- rule on {}", r.trigger),
            _ if rules.triggers().contains(&item) => "  trigger".to_string(),
            _ => String::new(),
        };
        println!("  {item:>4} {}{note}", if liked { "like" } else { "dislike" });
    }

    let (mut hits, mut total) = (0, 0);
    for s in &sequences {
        for p in 1..s.len() {
            if let Some(pred) = rules.predict(&s.items[..p], &s.feedback[..p]) {
                if rules.consequences().contains(&s.items[p]) {
                    total += 1;
                    hits += (pred == s.items[p]) as usize;
                }
            }
        }
    }
    println!("rules predict {hits}/{total} consequence positions");
    Ok(())
}
