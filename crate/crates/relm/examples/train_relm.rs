//! Trains the infilling corrector on a small synthetic world and corrects
//! a few test sentences with it. The model reads the (possibly corrupted)
//! source on one side of a separator and rewrites it into fixed mask slots
//! on the other side, so output length always matches input length.
//!
//!     cargo run --release --example train_relm -- --steps 1500

use clap::Parser;
use relm::experiments::{build_world, desk_model, evaluate_correction, Method, WorldConfig};
use relm::train::{train_single, TaskSpec, TrainConfig};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 1500)]
    steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.3)]
    mask_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    show: usize,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut world_cfg = WorldConfig::default();
    world_cfg.synth.corpus_size = 12_000;
    let world = build_world(&world_cfg)?;
    let model_cfg = desk_model(world.vocab.size());

    let mut cfg: TrainConfig = Method::Relm.train_config(
        &TrainConfig {
            steps: args.steps,
            ..TrainConfig::default()
        },
        args.mask_rate,
        0,
        args.seed,
    );
    cfg.adam.lr = args.lr;

    let task = TaskSpec::correction("csc", world.train.clone(), world.dev.clone());
    let outcome = train_single(&task, &world.vocab, &model_cfg, &cfg)?;
    println!(
        "trained {} steps; best dev F1 {:.1} at step {}",
        cfg.steps, outcome.best_metric, outcome.best_step
    );

    for (split, pairs) in [("seen edits", &world.test_seen), ("held-out edits", &world.test_held)] {
        let report = evaluate_correction(
            &outcome.best_params,
            &model_cfg,
            cfg.objective,
            0,
            0,
            pairs,
            &world.vocab,
        )?;
        println!(
            "{split:<16} P {:5.1}  R {:5.1}  F1 {:5.1}  FPR {:5.1}",
            report.correction_precision, report.correction_recall, report.correction_f1, report.fpr
        );
    }

    println!("\nsample corrections (source / predicted / target):");
    let sources: Vec<Vec<char>> = world
        .test_seen
        .iter()
        .filter(|p| p.has_error())
        .take(args.show)
        .map(|p| p.source().to_vec())
        .collect();
    let preds = relm::decode::relm_correct_batch(
        &outcome.best_params,
        &model_cfg,
        &sources,
        &world.vocab,
        0,
        0,
    )?;
    for (pair, pred) in world
        .test_seen
        .iter()
        .filter(|p| p.has_error())
        .zip(&preds)
    {
        let verdict = if pred == pair.target() { "fixed" } else { "" };
        println!(
            "  {}  /  {}  /  {}  {}",
            pair.source_string(),
            pred.iter().collect::<String>(),
            pair.target_string(),
            verdict
        );
    }
    Ok(())
}
