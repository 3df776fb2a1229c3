//! Shows what the masking policies do to training inputs, then (with
//! `--sweep`) trains the infilling objective across masking rates to show
//! why corrupting clean characters helps held-out edits.
//!
//! Policies replace source characters with a corruption marker before the
//! model sees them; labels are untouched. `mask_non_error` corrupts only
//! characters that are already correct, so real errors always stay
//! visible. Nothing is ever corrupted at inference time.
//!
//!     cargo run --release --example mask_policies
//!     cargo run --release --example mask_policies -- --sweep --steps 800

use clap::Parser;
use relm::experiments::{run_mask_suite, MaskSuiteConfig};
use relm::template::{mask_source, MaskPolicy};
use relm::text::{SentencePair, Vocab};

#[derive(Parser)]
struct Args {
    /// Also run the training sweep over rates and strategies.
    #[arg(long)]
    sweep: bool,
    #[arg(long, default_value_t = 1500)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    seeds: u64,
}

fn render(ids: &[usize], vocab: &Vocab) -> String {
    ids.iter()
        .map(|&id| {
            if id == Vocab::CORRUPT {
                '#'
            } else {
                vocab.char_of(id).unwrap_or('?')
            }
        })
        .collect()
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let vocab = Vocab::build(["abcdefgh"], 4)?;
    let pair = SentencePair::from_strs("abcdefgh", "abddefgh")?;
    let source_ids = vocab.encode_chars(pair.source());
    let errors = pair.error_positions();
    println!(
        "source {}   target {}   (error at position {})",
        pair.source_string(),
        pair.target_string(),
        errors[0]
    );

    println!("\nmodel inputs under each policy (# is the corruption marker):");
    for (name, policy) in [
        ("none", MaskPolicy::none()),
        ("mask_any 0.4", MaskPolicy::mask_any(0.4)?),
        ("mask_non_error 0.4", MaskPolicy::mask_non_error(0.4)?),
    ] {
        let masked = mask_source(&source_ids, &errors, &policy, 9);
        println!("  {name:<20} {}", render(&masked, &vocab));
    }

    let policy = MaskPolicy::mask_non_error(0.4)?;
    let n_draws = 10_000;
    let error_hits = (0..n_draws)
        .filter(|&s| mask_source(&source_ids, &errors, &policy, s)[errors[0]] == Vocab::CORRUPT)
        .count();
    println!("\nmask_non_error corrupted the error position {error_hits} times in {n_draws} draws");

    if args.sweep {
        let mut cfg = MaskSuiteConfig::default();
        cfg.train.steps = args.steps;
        cfg.seeds = (0..args.seeds).collect();
        let summary = run_mask_suite(&cfg, None)?;
        println!(
            "\nheld-out F1 by strategy and rate (mean over {} seed(s)):",
            args.seeds
        );
        for (strategy, rate, f1) in &summary.grid {
            println!("  {strategy:<16} rate {rate:.1}  f1_held {f1:6.1}");
        }
    }
    Ok(())
}
