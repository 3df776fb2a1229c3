//! Trains the three correction objectives on one synthetic world with
//! identical budgets, then scores them on seen-edit and held-out-edit test
//! splits. The held-out split is where the objectives separate: tagging
//! memorizes the directed edits it saw, infilling has to learn the
//! language.
//!
//!     cargo run --release --example compare_objectives -- --steps 2000
//!
//! Pass `--out runs` to also write the CSV/JSON summary.

use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;
use relm::experiments::{run_generalization_methods, Method, SuiteConfig};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[arg(long, default_value_t = 60)]
    vocab: usize,
    #[arg(long, default_value_t = 25_000)]
    corpus: usize,
    #[arg(long, default_value_t = 0.3)]
    mask_rate: f64,
    #[arg(long, default_value_t = 3e-4)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0.1)]
    error_rate: f64,
    #[arg(long, default_value_t = 0.3)]
    tau: f64,
    #[arg(long, default_value_t = 5)]
    min_len: usize,
    #[arg(long, default_value_t = 9)]
    max_len: usize,
    #[arg(long, default_value_t = 0)]
    world_seed: u64,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    /// Comma-separated subset of tagging, relm, autoregressive.
    #[arg(long, default_value = "tagging,relm,autoregressive")]
    methods: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut cfg = SuiteConfig::default();
    cfg.world.synth.vocab_size = args.vocab;
    cfg.world.synth.corpus_size = args.corpus;
    cfg.world.synth.error_rate = args.error_rate;
    cfg.world.synth.transition_temperature = args.tau;
    cfg.world.synth.sentence_length_range = (args.min_len, args.max_len);
    cfg.world.synth.seed = args.world_seed;
    cfg.train.steps = args.steps;
    cfg.train.batch_size = args.batch;
    cfg.train.adam.lr = args.lr;
    cfg.mask_rate = args.mask_rate;
    cfg.dropout = args.dropout;
    cfg.seeds = (0..args.seeds as u64).collect();

    let methods: Vec<Method> = args
        .methods
        .split(',')
        .map(|m| match m.trim() {
            "tagging" => Ok(Method::Tagging),
            "relm" => Ok(Method::Relm),
            "autoregressive" => Ok(Method::Autoregressive),
            other => Err(anyhow::anyhow!("unknown method {other:?}")),
        })
        .collect::<Result<_, _>>()?;

    let started = Instant::now();
    let runs = run_generalization_methods(&cfg, &methods, args.out.as_deref())?;
    let elapsed = started.elapsed();

    println!("{:<16} {:>4} {:>8} {:>8} {:>8} {:>8}", "method", "seed", "f1_seen", "f1_held", "fpr_held", "dev_f1");
    for r in &runs.summary.rows {
        println!(
            "{:<16} {:>4} {:>8.1} {:>8.1} {:>8.1} {:>8.1}",
            r.method, r.seed, r.f1_seen, r.f1_held, r.fpr_held, r.dev_f1
        );
    }
    println!("\nmeans over {} seed(s):", cfg.seeds.len());
    for m in &runs.summary.means {
        println!(
            "{:<16} f1_seen {:>6.1}  f1_held {:>6.1}  fpr_held {:>6.1}",
            m.method, m.f1_seen, m.f1_held, m.fpr_held
        );
    }
    let mean_of = |name: &str| runs.summary.means.iter().find(|m| m.method == name);
    if let (Some(relm), Some(tagging)) = (mean_of("relm"), mean_of("tagging")) {
        println!(
            "\nheld-out F1 gap (relm - tagging): {:+.1} points",
            relm.f1_held - tagging.f1_held
        );
        println!(
            "held-out FPR (relm vs tagging): {:.1} vs {:.1}",
            relm.fpr_held, tagging.fpr_held
        );
    }
    if let (Some(ar), Some(tagging)) = (mean_of("autoregressive"), mean_of("tagging")) {
        println!(
            "held-out F1 gap (autoregressive - tagging): {:+.1} points",
            ar.f1_held - tagging.f1_held
        );
    }
    println!("total time: {:.1}s", elapsed.as_secs_f64());
    Ok(())
}
