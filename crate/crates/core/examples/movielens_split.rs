//! Loads a MovieLens-style rating log, binarizes ratings, builds the
//! leave-one-out split and writes the windowed training examples.
//!
//! cargo run --release --example movielens_split -- path/to/u.data [window]
//!
//! Without a path a small random log is generated instead.

use std::path::PathBuf;

use ccr::data::{
    build_sequences, load_interactions, parse_interactions, save_examples, split_leave_one_out, windowize,
    DEFAULT_WINDOW,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn demo_log() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut out = String::new();
    for user in 1..=50 {
        let mut items: Vec<u32> = (1..=300).collect();
        for k in 0..rng.gen_range(8..30) {
            let item = items.swap_remove(rng.gen_range(0..items.len()));
            let ts = 874_000_000 + k * 3_600 + rng.gen_range(0..60);
            out.push_str(&format!("{user}\t{item}\t{}\t{ts}\n", rng.gen_range(1..=5)));
        }
    }
    out
}

fn main() -> ccr::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let window = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(DEFAULT_WINDOW);
    let log = match args.first() {
        Some(path) => load_interactions(&PathBuf::from(path))?,
        None => parse_interactions(&demo_log(), "generated")?,
    };
    println!("{} ratings, {} users, {} items", log.len(), log.n_users(), log.n_items());

    let sequences = build_sequences(&log)?;
    let liked: usize = sequences.iter().map(|s| s.feedback.iter().filter(|&&b| b).count()).sum();
    let total: usize = sequences.iter().map(|s| s.len()).sum();
    println!("{liked} of {total} interactions are likes (rating >= 4)");

    let split = split_leave_one_out(&sequences);
    let train = windowize(&split.train, window);
    println!(
        "{} validation and {} test targets; {} training windows of length {window}",
        split.validation.len(),
        split.test.len(),
        train.len()
    );
    if let Some(ex) = train.first() {
        println!("first window: user {} history {:?} feedback {:?} -> {}", ex.user_id, ex.history, ex.history_feedback, ex.target);
    }

    let out = std::env::temp_dir().join("ccr_train.jsonl");
    save_examples(&out, &train)?;
    println!("wrote {}", out.display());
    Ok(())
}
