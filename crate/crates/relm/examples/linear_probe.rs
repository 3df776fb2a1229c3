//! Asks what a correction-trained encoder knows beyond correcting: a
//! linear head reads each frozen encoder's pooled features and learns a
//! sentence classification the encoders never saw. Random-initialization
//! encoders give the floor, the majority class the sanity line.
//!
//!     cargo run --release --example linear_probe -- --steps 1200

use clap::Parser;
use relm::experiments::{run_probe_suite, ProbeSuiteConfig};

#[derive(Parser)]
struct Args {
    /// Encoder pretraining steps.
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut cfg = ProbeSuiteConfig::default();
    cfg.train.steps = args.steps;
    cfg.train.adam.lr = args.lr;
    cfg.seeds = (0..args.seeds).collect();

    let summary = run_probe_suite(&cfg, None)?;
    println!("probe accuracy on the dominant-third task, frozen features only:");
    for row in &summary.rows {
        println!("  {:<10} seed {}  {:.3}", row.encoder, row.seed, row.dev_accuracy);
    }
    println!("  majority class baseline: {:.3}", summary.majority_baseline);
    for encoder in ["relm", "tagging", "random"] {
        println!("  mean {:<8} {:.3}", encoder, summary.mean(encoder));
    }
    Ok(())
}
