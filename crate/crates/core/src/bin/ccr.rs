//! Command-line front end over `ccr::pipeline`.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 1 otherwise.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ccr::pipeline::{self, RunConfig};

#[derive(Parser)]
#[command(name = "ccr", version, about = "Counterfactual collaborative reasoning pipeline")]
struct Cli {
    /// JSON run config. Flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Role {
    Sampler,
    Anchor,
}

#[derive(Subcommand)]
enum Command {
    /// Load or generate the data, split it and write training examples.
    Prepare,
    /// Train the sampler, or the anchor for a given round (0 = pre-training).
    Train {
        #[arg(long, value_enum)]
        role: Role,
        #[arg(long, default_value_t = 0)]
        round: usize,
    },
    /// Generate counterfactual examples for a round.
    Augment {
        #[arg(long, default_value_t = 1)]
        round: usize,
    },
    /// Evaluate the anchor of a round (0 = baseline).
    Evaluate {
        #[arg(long, default_value_t = 0)]
        round: usize,
    },
    /// Extract explanations and score them with PN/PS.
    Explain,
    /// Run every stage in order.
    Pipeline,
}

fn load_config(cli: &Cli) -> ccr::Result<RunConfig> {
    let mut value = match &cli.config {
        Some(path) => pipeline::read_config_value(path)?,
        None => serde_json::json!({}),
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| ccr::Error::Config("config must be a JSON object".into()))?;
    if let Some(seed) = cli.seed {
        obj.insert("seed".into(), seed.into());
    }
    if let Some(out) = &cli.out {
        obj.insert("out_dir".into(), out.to_string_lossy().into_owned().into());
    }
    RunConfig::from_value(value)
}

fn run(cli: Cli) -> ccr::Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(ccr::Error::Config("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ccr::Error::Config(e.to_string()))?;
    }
    let cfg = load_config(&cli)?;
    let c = &cfg;
    match cli.command {
        Command::Prepare => {
            let data = pipeline::timed(c, "prepare", || pipeline::prepare(c))?;
            println!("{}", serde_json::to_string_pretty(&data.manifest)?);
        }
        Command::Train { role, round } => {
            let data = pipeline::load_prepared(c)?;
            match role {
                Role::Sampler => {
                    pipeline::timed(c, "train-sampler", || pipeline::train_sampler(c, &data))?;
                    println!("wrote {}", c.path("sampler.ckpt").display());
                }
                Role::Anchor => {
                    let name = if round == 0 { "train-anchor".to_string() } else { format!("train-anchor-round{round}") };
                    pipeline::timed(c, &name, || pipeline::train_anchor_round(c, &data, round))?;
                    println!("trained anchor for round {round}");
                }
            }
        }
        Command::Augment { round } => {
            let data = pipeline::load_prepared(c)?;
            let sampler = pipeline::load_sampler(c)?;
            let (_, report) =
                pipeline::timed(c, &format!("augment-round{round}"), || pipeline::augment(c, &data, &sampler, round))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Evaluate { round } => {
            let data = pipeline::load_prepared(c)?;
            let name = if round == 0 { "evaluate".to_string() } else { format!("evaluate-round{round}") };
            let m = pipeline::timed(c, &name, || pipeline::evaluate(c, &data, round))?;
            println!("{}", serde_json::to_string_pretty(&m.to_json(&[("round", round.into())]))?);
        }
        Command::Explain => {
            let data = pipeline::load_prepared(c)?;
            for r in pipeline::timed(c, "explain", || pipeline::explain(c, &data))? {
                println!(
                    "top-{}: PN {:?} PS {:?} F_NS {:?} ({} explained)",
                    r.n, r.pn, r.ps, r.f_ns, r.nonempty
                );
            }
        }
        Command::Pipeline => {
            let m = pipeline::run_pipeline(c)?;
            println!("{} artifacts in {}", m.artifacts.len(), c.out_dir.display());
            println!("{}", std::fs::read_to_string(c.path("round_metrics.csv")).unwrap_or_default());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
