//! Builds the synthetic correction world and prints what is in it: the
//! Markov chain behind the sentences, the confusion set that corrupts
//! them, and the train/held-out split of directed edits.
//!
//!     cargo run --release --example synth_world

use clap::Parser;
use relm::experiments::{build_world, WorldConfig};
use relm::synth::{stationary_distribution, MarkovChain};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 60)]
    vocab: usize,
    #[arg(long, default_value_t = 0.3)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample pairs to print.
    #[arg(long, default_value_t = 8)]
    show: usize,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut cfg = WorldConfig::default();
    cfg.synth.vocab_size = args.vocab;
    cfg.synth.transition_temperature = args.tau;
    cfg.synth.seed = args.seed;

    let chain = MarkovChain::new(args.vocab, args.tau, args.seed)?;
    let t = chain.transition_matrix();
    let peak: f64 = (0..args.vocab)
        .map(|i| t.row(i).iter().cloned().fold(0.0, f64::max))
        .sum::<f64>()
        / args.vocab as f64;
    let pi = stationary_distribution(t);
    let drift = (&pi.dot(t) - &pi).iter().map(|d| d.abs()).fold(0.0, f64::max);
    println!("chain: {} chars, tau {}", args.vocab, args.tau);
    println!("  mean top transition probability {peak:.3}");
    println!("  stationary fixed-point drift {drift:.2e}");

    let world = build_world(&cfg)?;
    println!(
        "\nconfusion: {} directed edits, {} train / {} held out",
        world.conf_train.n_pairs() + world.conf_held.n_pairs(),
        world.conf_train.n_pairs(),
        world.conf_held.n_pairs()
    );
    let overlap = world
        .conf_train
        .pairs()
        .iter()
        .filter(|p| world.conf_held.pairs().contains(p))
        .count();
    println!("  edit overlap between halves: {overlap}");

    println!(
        "\nsplits: {} train, {} dev, {} test (seen edits), {} test (held-out edits)",
        world.train.len(),
        world.dev.len(),
        world.test_seen.len(),
        world.test_held.len()
    );

    println!("\nsample pairs (source -> target, * marks injected errors):");
    for pair in world.train.iter().filter(|p| p.has_error()).take(args.show) {
        let marks: String = pair
            .source()
            .iter()
            .zip(pair.target())
            .map(|(s, t)| if s == t { ' ' } else { '*' })
            .collect();
        println!("  {} -> {}", pair.source_string(), pair.target_string());
        println!("  {marks}");
    }
    Ok(())
}
