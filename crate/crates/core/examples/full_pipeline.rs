//! Runs every stage (prepare, sampler and anchor training, augmentation
//! rounds, evaluation, explanation) and prints the per-round metrics.
//!
//! cargo run --release --example full_pipeline -- [seed] [out_dir] [rounds]

use ccr::pipeline::{run_pipeline, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = RunConfig::with_seed(args.first().and_then(|s| s.parse().ok()).unwrap_or(1));
    cfg.out_dir = args.get(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("ccr-run"));
    cfg.rounds = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);

    let manifest = run_pipeline(&cfg)?;
    print!("{}", std::fs::read_to_string(cfg.path("round_metrics.csv"))?);
    for n in &cfg.explain.top_n {
        let path = cfg.path(&format!("pnps_top{n}.json"));
        let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
        println!("top-{n}: PN {} PS {} F_NS {}", report["pn"], report["ps"], report["f_ns"]);
    }
    let total: f64 = manifest.stage_seconds.values().sum();
    println!("{} artifacts in {} ({total:.1}s)", manifest.artifacts.len(), cfg.out_dir.display());
    Ok(())
}
