//! Command-line front end.
//!
//! Every subcommand is a thin wrapper over the library: it parses flags,
//! loads files, calls one entry point, and writes the results. The merged
//! effective configuration is saved next to each output so a run can be
//! reproduced from its artifacts alone.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::decode::{ar_correct_batch, relm_correct_batch, tagging_correct_batch};
use crate::eval::{evaluate, np_sweep, MetricsReport, NpRates};
use crate::experiments::{
    build_world, desk_model, dominant_group_task, majority_baseline, run_generalization_suite,
    run_mask_suite, run_multitask_suite, run_probe_suite, MaskSuiteConfig, MultitaskSuiteConfig,
    ProbeSuiteConfig, SuiteConfig, WorldConfig,
};
use crate::net::{load_params, save_params, AdamHyper, ModelConfig, Params};
use crate::synth::SynthConfig;
use crate::template::{MaskPolicy, MaskStrategy};
use crate::text::{load_pairs, serialize_pairs, SentencePair, Vocab};
use crate::train::{
    assign_prompt_offsets, linear_probe, train_single, Objective, ProbeConfig, TaskSpec,
    TrainConfig,
};

#[derive(Debug, Parser)]
#[command(name = "relm", version, about = "Character-level spelling correction workbench")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic world: corpus splits and confusion sets.
    Synth(SynthArgs),
    /// Train one objective on a pair file and save a checkpoint.
    Train(TrainArgs),
    /// Correct sentences with a trained checkpoint.
    Correct(CorrectArgs),
    /// Score a checkpoint or a prediction file against gold pairs.
    Eval(EvalArgs),
    /// Predict precision and F1 across clean-to-erroneous ratios.
    Sweep(SweepArgs),
    /// Fit a linear probe on a frozen checkpoint.
    Probe(ProbeArgs),
    /// Run a full experiment suite and write its report.
    Suite(SuiteArgs),
}

pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Correct(args) => cmd_correct(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Probe(args) => cmd_probe(args),
        Command::Suite(args) => cmd_suite(args),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_pair_file(path: &Path) -> Result<Vec<SentencePair>> {
    let text = read_to_string(path)?;
    load_pairs(text.as_bytes()).with_context(|| format!("parsing {}", path.display()))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(read_to_string(path)?.lines().map(str::to_string).collect())
}

/// Sibling path with an extra suffix, e.g. `model.ckpt` to `model.ckpt.vocab.json`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_checkpoint(path: &Path) -> Result<(Params, ModelConfig)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_params(&bytes).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn load_vocab(model: &Path, explicit: Option<&Path>) -> Result<Vocab> {
    let path = explicit
        .map(Path::to_path_buf)
        .unwrap_or_else(|| sibling(model, ".vocab.json"));
    let text = read_to_string(&path)?;
    Vocab::from_json(&text).with_context(|| format!("parsing vocabulary {}", path.display()))
}

/// Prompt table to decode with: the `csc` table if present, else the only
/// table, else no prompt.
fn decode_prompt(params: &Params) -> (usize, crate::text::TokenId) {
    let specs = params.prompt_specs();
    let spec = specs
        .iter()
        .find(|s| s.name == "csc")
        .or_else(|| specs.first());
    match spec {
        Some(s) => (s.len, s.id_offset),
        None => (0, 0),
    }
}

fn parse_ratio_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .with_context(|| format!("bad ratio {p:?}"))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// synth

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory for the generated splits.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 60)]
    vocab: usize,
    #[arg(long, default_value_t = 25_000)]
    corpus: usize,
    /// Transition softmax temperature; lower is more predictable.
    #[arg(long, default_value_t = 0.3)]
    tau: f64,
    #[arg(long, default_value_t = 5)]
    min_len: usize,
    #[arg(long, default_value_t = 9)]
    max_len: usize,
    /// Per-position substitution probability.
    #[arg(long, default_value_t = 0.1)]
    error_rate: f64,
    /// Substitutes per character in the confusion set.
    #[arg(long, default_value_t = 4)]
    per_char: usize,
    /// Fraction of directed edits held out of training.
    #[arg(long, default_value_t = 0.25)]
    holdout: f64,
    #[arg(long, default_value_t = 400)]
    n_dev: usize,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let cfg = WorldConfig {
        synth: SynthConfig {
            vocab_size: args.vocab,
            transition_temperature: args.tau,
            sentence_length_range: (args.min_len, args.max_len),
            corpus_size: args.corpus,
            error_rate: args.error_rate,
            seed: args.seed,
        },
        per_char: args.per_char,
        holdout_fraction: args.holdout,
        n_dev: args.n_dev,
        n_test: args.n_test,
        ..WorldConfig::default()
    };
    let world = build_world(&cfg)?;
    let dir = &args.out;
    write_file(&dir.join("train.tsv"), serialize_pairs(&world.train))?;
    write_file(&dir.join("dev.tsv"), serialize_pairs(&world.dev))?;
    write_file(&dir.join("test_seen.tsv"), serialize_pairs(&world.test_seen))?;
    write_file(&dir.join("test_held.tsv"), serialize_pairs(&world.test_held))?;
    write_file(&dir.join("confusion_train.tsv"), world.conf_train.serialize())?;
    write_file(&dir.join("confusion_held.tsv"), world.conf_held.serialize())?;
    write_file(&dir.join("vocab.json"), world.vocab.to_json())?;
    write_file(&dir.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
    println!(
        "wrote {} train / {} dev / {}+{} test pairs to {}",
        world.train.len(),
        world.dev.len(),
        world.test_seen.len(),
        world.test_held.len(),
        dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training pairs, one `source<TAB>target` per line.
    #[arg(long)]
    data: PathBuf,
    /// Development pairs; defaults to the last 5% of the training file.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Checkpoint path for the best model.
    #[arg(long)]
    out: PathBuf,
    /// Base configuration as JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    objective: Option<Objective>,
    /// Masking policy: none, mask_any, or mask_non_error.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    mask_rate: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    prompt_len: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// Training log as newline-delimited JSON.
    #[arg(long)]
    log: Option<PathBuf>,
}

fn parse_policy(name: &str, rate: Option<f64>) -> Result<MaskPolicy> {
    let strategy = match name {
        "none" => return Ok(MaskPolicy::none()),
        "mask_any" => MaskStrategy::MaskAny,
        "mask_non_error" => MaskStrategy::MaskNonError,
        other => bail!("unknown policy {other:?}; expected none, mask_any, or mask_non_error"),
    };
    let rate = rate.unwrap_or(0.3);
    if rate == 0.0 {
        return Ok(MaskPolicy::none());
    }
    Ok(MaskPolicy::new(strategy, rate)?)
}

fn merge_train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => serde_json::from_str(&read_to_string(path)?)
            .with_context(|| format!("parsing {}", path.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(o) = args.objective {
        cfg.objective = o;
    }
    if let Some(p) = &args.policy {
        cfg.policy = parse_policy(p, args.mask_rate)?;
    } else if let Some(rate) = args.mask_rate {
        cfg.policy = parse_policy("mask_non_error", Some(rate))?;
    }
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if let Some(v) = args.batch {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.adam = AdamHyper {
            lr: v,
            ..cfg.adam
        };
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.prompt_len {
        cfg.prompt_len = v;
    }
    if let Some(v) = args.eval_every {
        cfg.eval_every = v;
    }
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = merge_train_config(&args)?;
    let mut train_pairs = load_pair_file(&args.data)?;
    let dev_pairs = match &args.dev {
        Some(path) => load_pair_file(path)?,
        None => {
            let n_dev = (train_pairs.len() / 20).max(1);
            if n_dev >= train_pairs.len() {
                bail!("{} has too few pairs to split off a dev set", args.data.display());
            }
            train_pairs.split_off(train_pairs.len() - n_dev)
        }
    };

    let corpus: Vec<String> = train_pairs
        .iter()
        .chain(&dev_pairs)
        .flat_map(|p| [p.source_string(), p.target_string()])
        .collect();
    let vocab = Vocab::build(&corpus, 16)?;

    let longest = train_pairs
        .iter()
        .chain(&dev_pairs)
        .map(SentencePair::len)
        .max()
        .unwrap_or(0);
    let mut model_cfg = desk_model(vocab.size());
    model_cfg.max_len = model_cfg.max_len.max(cfg.prompt_len + 2 * longest + 2);

    let mut task = TaskSpec::correction("csc", train_pairs, dev_pairs);
    if cfg.objective == Objective::Rephrase && cfg.prompt_len > 0 {
        task = task.with_prompt();
        assign_prompt_offsets(std::slice::from_mut(&mut task), cfg.prompt_len, &vocab)?;
    }

    let outcome = train_single(&task, &vocab, &model_cfg, &cfg)?;
    write_file(&args.out, save_params(&outcome.best_params, &model_cfg))?;
    write_file(&sibling(&args.out, ".vocab.json"), vocab.to_json())?;
    let effective = serde_json::json!({ "model": model_cfg, "train": cfg });
    write_file(
        &sibling(&args.out, ".config.json"),
        serde_json::to_string_pretty(&effective)?,
    )?;
    if let Some(log_path) = &args.log {
        let mut lines = String::new();
        for record in &outcome.log {
            lines.push_str(&serde_json::to_string(record)?);
            lines.push('\n');
        }
        write_file(log_path, lines)?;
    }
    println!(
        "saved {} (best dev metric {:.4} at step {})",
        args.out.display(),
        outcome.best_metric,
        outcome.best_step
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// correct

#[derive(Debug, Args)]
struct CorrectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Sentences to correct, one per line.
    #[arg(long)]
    input: PathBuf,
    /// Corrected sentences; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Decoder to use; must match the training objective.
    #[arg(long, default_value_t = Objective::Rephrase)]
    objective: Objective,
    /// Vocabulary path; defaults to `<model>.vocab.json`.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

fn decode_sources(
    params: &Params,
    model_cfg: &ModelConfig,
    objective: Objective,
    vocab: &Vocab,
    sources: &[Vec<char>],
) -> Result<Vec<Vec<char>>> {
    Ok(match objective {
        Objective::Tagging => tagging_correct_batch(params, model_cfg, sources, vocab)?,
        Objective::Rephrase => {
            let (len, base) = decode_prompt(params);
            relm_correct_batch(params, model_cfg, sources, vocab, len, base)?
        }
        Objective::Autoregressive => ar_correct_batch(params, model_cfg, sources, vocab, 4)?
            .into_iter()
            .map(|d| d.output)
            .collect(),
    })
}

fn cmd_correct(args: CorrectArgs) -> Result<()> {
    let (params, model_cfg) = load_checkpoint(&args.model)?;
    let vocab = load_vocab(&args.model, args.vocab.as_deref())?;
    let sources: Vec<Vec<char>> = read_lines(&args.input)?
        .iter()
        .map(|l| l.chars().collect())
        .collect();
    if sources.iter().any(Vec::is_empty) {
        bail!("{} contains an empty line", args.input.display());
    }
    let preds = decode_sources(&params, &model_cfg, args.objective, &vocab, &sources)?;
    let mut text = String::new();
    for pred in &preds {
        text.extend(pred.iter());
        text.push('\n');
    }
    match &args.out {
        Some(path) => write_file(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

#[derive(Debug, Args)]
struct EvalArgs {
    /// Gold pairs, one `source<TAB>target` per line.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to decode with.
    #[arg(long, conflicts_with = "pred")]
    model: Option<PathBuf>,
    /// Already-decoded predictions, one sentence per line.
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long, default_value_t = Objective::Rephrase)]
    objective: Objective,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Report path; printed to stdout regardless.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let pairs = load_pair_file(&args.data)?;
    let preds: Vec<Vec<char>> = match (&args.model, &args.pred) {
        (Some(model), None) => {
            let (params, model_cfg) = load_checkpoint(model)?;
            let vocab = load_vocab(model, args.vocab.as_deref())?;
            let sources: Vec<Vec<char>> = pairs.iter().map(|p| p.source().to_vec()).collect();
            decode_sources(&params, &model_cfg, args.objective, &vocab, &sources)?
        }
        (None, Some(pred)) => read_lines(pred)?
            .iter()
            .map(|l| l.chars().collect())
            .collect(),
        _ => bail!("exactly one of --model and --pred is required"),
    };
    let report = evaluate(&pairs, &preds)?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(path) = &args.out {
        write_file(path, &json)?;
    }
    println!("{json}");
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Debug, Args)]
struct SweepArgs {
    /// Evaluation report to read behavior rates from.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Fraction of erroneous sentences the corrector modifies.
    #[arg(long, conflicts_with = "report")]
    modify_rate: Option<f64>,
    /// Fraction of erroneous sentences fixed exactly.
    #[arg(long, conflicts_with = "report")]
    fix_rate: Option<f64>,
    /// Fraction of clean sentences modified.
    #[arg(long, conflicts_with = "report")]
    fpr: Option<f64>,
    /// Comma-separated clean-to-erroneous ratios.
    #[arg(long, default_value = "0.5,1,2,4,8")]
    ratios: String,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let rates = match &args.report {
        Some(path) => {
            let report: MetricsReport = serde_json::from_str(&read_to_string(path)?)
                .with_context(|| format!("parsing {}", path.display()))?;
            NpRates::from_report(&report)
        }
        None => match (args.modify_rate, args.fix_rate, args.fpr) {
            (Some(m), Some(e), Some(f)) => NpRates {
                modify_rate_on_errors: m,
                exact_fix_rate: e,
                fpr: f,
            },
            _ => bail!("either --report or all of --modify-rate, --fix-rate, --fpr are required"),
        },
    };
    let ratios = parse_ratio_list(&args.ratios)?;
    let points = np_sweep(&rates, &ratios)?;
    let mut csv = String::from("ratio,precision,f1\n");
    for p in &points {
        csv.push_str(&format!("{},{:.6},{:.6}\n", p.ratio, p.precision, p.f1));
    }
    match &args.out {
        Some(path) => write_file(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// probe

#[derive(Debug, Args)]
struct ProbeArgs {
    /// Frozen checkpoint to probe.
    #[arg(long)]
    model: PathBuf,
    /// Pair file whose clean targets become the probe corpus.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 400)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn cmd_probe(args: ProbeArgs) -> Result<()> {
    let (params, model_cfg) = load_checkpoint(&args.model)?;
    let vocab = load_vocab(&args.model, args.vocab.as_deref())?;
    let texts: Vec<Vec<char>> = load_pair_file(&args.data)?
        .iter()
        .map(|p| p.target().to_vec())
        .collect();
    if texts.len() < 10 {
        bail!("{} has too few sentences for a probe", args.data.display());
    }
    let n_dev = texts.len() / 5;
    let (train_texts, dev_texts) = texts.split_at(texts.len() - n_dev);
    let task = dominant_group_task(train_texts, dev_texts, vocab.chars())?;
    let probe_cfg = ProbeConfig {
        steps: args.steps,
        seed: args.seed,
        ..ProbeConfig::default()
    };
    let outcome = linear_probe(&params, &model_cfg, &task, &vocab, &probe_cfg)?;
    let json = serde_json::json!({
        "task": task.name,
        "train_accuracy": outcome.train_accuracy,
        "dev_accuracy": outcome.dev_accuracy,
        "majority_baseline": majority_baseline(&task),
    });
    println!("{}", serde_json::to_string_pretty(&json)?);
    Ok(())
}

// ---------------------------------------------------------------------------
// suite

#[derive(Debug, Args)]
struct SuiteArgs {
    /// One of: generalization, mask, multitask, probe.
    name: String,
    /// Directory for run outputs.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Suite configuration as JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of seeds, used as 0..n.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
}

fn suite_config<T: Default + serde::de::DeserializeOwned>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => {
            serde_json::from_str(&read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(T::default()),
    }
}

fn cmd_suite(args: SuiteArgs) -> Result<()> {
    let seeds = args.seeds.map(|n| (0..n).collect::<Vec<u64>>());
    let out = Some(args.out.as_path());
    match args.name.as_str() {
        "generalization" => {
            let mut cfg: SuiteConfig = suite_config(args.config.as_deref())?;
            if let Some(s) = &seeds {
                cfg.seeds = s.clone();
            }
            if let Some(v) = args.steps {
                cfg.train.steps = v;
            }
            let runs = run_generalization_suite(&cfg, out)?;
            for m in &runs.summary.means {
                println!(
                    "{:<16} f1_seen {:6.1}  f1_held {:6.1}  fpr_held {:6.1}",
                    m.method, m.f1_seen, m.f1_held, m.fpr_held
                );
            }
        }
        "mask" => {
            let mut cfg: MaskSuiteConfig = suite_config(args.config.as_deref())?;
            if let Some(s) = &seeds {
                cfg.seeds = s.clone();
            }
            if let Some(v) = args.steps {
                cfg.train.steps = v;
            }
            let summary = run_mask_suite(&cfg, out)?;
            for row in &summary.rows {
                println!(
                    "{:<16} rate {:.1}  seed {}  f1_held {:6.1}",
                    row.strategy, row.rate, row.seed, row.f1_held
                );
            }
        }
        "multitask" => {
            let mut cfg: MultitaskSuiteConfig = suite_config(args.config.as_deref())?;
            if let Some(s) = &seeds {
                cfg.seeds = s.clone();
            }
            if let Some(v) = args.steps {
                cfg.train.steps = v;
            }
            let summary = run_multitask_suite(&cfg, out)?;
            for row in &summary.rows {
                println!(
                    "{:<16} seed {}  single {:6.1}  multi {:6.1}  class shift {:5.1}",
                    row.method, row.seed, row.csc_f1_single, row.csc_f1_multi, row.class_shift
                );
            }
        }
        "probe" => {
            let mut cfg: ProbeSuiteConfig = suite_config(args.config.as_deref())?;
            if let Some(s) = &seeds {
                cfg.seeds = s.clone();
            }
            if let Some(v) = args.steps {
                cfg.train.steps = v;
            }
            let summary = run_probe_suite(&cfg, out)?;
            for row in &summary.rows {
                println!(
                    "{:<16} seed {}  probe accuracy {:.3}",
                    row.encoder, row.seed, row.dev_accuracy
                );
            }
            println!("majority baseline {:.3}", summary.majority_baseline);
        }
        other => bail!("unknown suite {other:?}; expected generalization, mask, multitask, or probe"),
    }
    println!("outputs under {}", args.out.display());
    Ok(())
}
