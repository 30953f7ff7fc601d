//! NDCG@K and HR@K on hand-made rankings, and the chance level of a random
//! ranking under the 101-candidate protocol.
//!
//! cargo run --release --example ranking_metrics

use std::collections::BTreeSet;

use ccr::eval::{build_eval_candidates, ndcg_hr, DEFAULT_KS};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ccr::Result<()> {
    let ranked = [42, 7, 13, 99, 5, 61];
    for target in [42, 13, 61] {
        let m = ndcg_hr(&ranked, target, &[1, 3, 5])?;
        println!("target {target}: HR {:?} NDCG {:?}", m.hr, m.ndcg);
    }

    // One user who has seen items 0..20; the target is item 3.
    let seen: BTreeSet<usize> = (0..20).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let users = 5000;
    let mut hr = vec![0.0; DEFAULT_KS.len()];
    let mut ndcg = vec![0.0; DEFAULT_KS.len()];
    for u in 0..users {
        let mut cands = build_eval_candidates(u, 3, &seen, 500, 0)?;
        cands.shuffle(&mut rng);
        let m = ndcg_hr(&cands, 3, &DEFAULT_KS)?;
        for (i, k) in DEFAULT_KS.iter().enumerate() {
            hr[i] += m.hr[k] / users as f64;
            ndcg[i] += m.ndcg[k] / users as f64;
        }
    }
    for (i, k) in DEFAULT_KS.iter().enumerate() {
        println!("random ranking over {users} users: HR@{k} {:.4} (expected {:.4}), NDCG@{k} {:.4}", hr[i], *k as f64 / 101.0, ndcg[i]);
    }
    Ok(())
}
