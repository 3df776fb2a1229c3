//! Experiment suites over the synthetic world.
//!
//! A world is one Markov chain, one confusion set split into train and
//! held-out halves, and sentence splits corrupted accordingly. Every suite
//! trains on the same world so method comparisons are paired. Each suite
//! writes one CSV and one JSON summary into a run directory named after a
//! hash of its configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decode::{ar_correct_batch, relm_correct_batch, tagging_correct_batch, DecodeError};
use crate::eval::{evaluate, EvalError, MetricsReport};
use crate::net::{init_model, ModelConfig, NetError, Params};
use crate::rng::{fnv1a, mix};
use crate::synth::{
    alphabet, build_confusion_set, gen_markov_corpus, inject_corpus, split_confusion,
    ConfusionSet, SynthConfig, SynthError,
};
use crate::template::{Attention, MaskPolicy, MaskStrategy};
use crate::text::{SentencePair, TextError, TokenId, Vocab};
use crate::train::{
    assign_prompt_offsets, linear_probe, train_multitask, train_single, Objective, ProbeConfig,
    TaskSpec, TrainConfig, TrainError,
};

const STREAM_WORLD_CONF: u64 = 0x61;
const STREAM_WORLD_SPLIT: u64 = 0x62;
const STREAM_WORLD_TRAIN: u64 = 0x63;
const STREAM_WORLD_DEV: u64 = 0x64;
const STREAM_WORLD_SEEN: u64 = 0x65;
const STREAM_WORLD_HELD: u64 = 0x66;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("corpus of {corpus} sentences cannot cover {needed} dev/test sentences")]
    CorpusTooSmall { corpus: usize, needed: usize },
    #[error("suite needs at least one seed")]
    NoSeeds,
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub synth: SynthConfig,
    /// Substitutes per character in the confusion set.
    pub per_char: usize,
    /// Fraction of directed edit pairs held out of training.
    pub holdout_fraction: f64,
    pub n_dev: usize,
    /// Sentences in each test split (seen-edit and held-out-edit).
    pub n_test: usize,
    pub prompt_capacity: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            per_char: 4,
            holdout_fraction: 0.25,
            n_dev: 400,
            n_test: 1000,
            prompt_capacity: 16,
        }
    }
}

/// A fully materialized synthetic world: vocabulary, corrupted splits, and
/// the train/held-out confusion halves that produced them.
#[derive(Debug, Clone)]
pub struct World {
    pub vocab: Vocab,
    pub chars: Vec<char>,
    pub train: Vec<SentencePair>,
    pub dev: Vec<SentencePair>,
    pub test_seen: Vec<SentencePair>,
    pub test_held: Vec<SentencePair>,
    pub conf_train: ConfusionSet,
    pub conf_held: ConfusionSet,
}

pub fn build_world(cfg: &WorldConfig) -> Result<World, ExperimentError> {
    let needed = cfg.n_dev + 2 * cfg.n_test + 1;
    if cfg.synth.corpus_size < needed {
        return Err(ExperimentError::CorpusTooSmall {
            corpus: cfg.synth.corpus_size,
            needed,
        });
    }
    let corpus = gen_markov_corpus(&cfg.synth)?;
    let chars = alphabet(cfg.synth.vocab_size)?;
    let vocab = Vocab::build([chars.iter().collect::<String>()], cfg.prompt_capacity)?;

    let conf = build_confusion_set(&chars, cfg.per_char, mix(cfg.synth.seed, STREAM_WORLD_CONF))?;
    let (conf_train, conf_held) = split_confusion(
        &conf,
        cfg.holdout_fraction,
        mix(cfg.synth.seed, STREAM_WORLD_SPLIT),
    )?;

    let n_train = cfg.synth.corpus_size - cfg.n_dev - 2 * cfg.n_test;
    let (train_s, rest) = corpus.split_at(n_train);
    let (dev_s, rest) = rest.split_at(cfg.n_dev);
    let (seen_s, held_s) = rest.split_at(cfg.n_test);

    let er = cfg.synth.error_rate;
    let seed = cfg.synth.seed;
    Ok(World {
        vocab,
        chars,
        train: inject_corpus(train_s, &conf_train, er, mix(seed, STREAM_WORLD_TRAIN)),
        dev: inject_corpus(dev_s, &conf_train, er, mix(seed, STREAM_WORLD_DEV)),
        test_seen: inject_corpus(seen_s, &conf_train, er, mix(seed, STREAM_WORLD_SEEN)),
        test_held: inject_corpus(held_s, &conf_held, er, mix(seed, STREAM_WORLD_HELD)),
        conf_train,
        conf_held,
    })
}

/// Contiguous character groups: the sorted alphabet is cut into
/// `n_groups` nearly equal blocks.
pub fn group_of(c: char, chars: &[char], n_groups: usize) -> usize {
    let i = chars.iter().position(|&x| x == c).expect("char in alphabet");
    i * n_groups / chars.len()
}

fn dominant_group(text: &[char], chars: &[char], n_groups: usize) -> usize {
    let mut counts = vec![0usize; n_groups];
    for &c in text {
        counts[group_of(c, chars, n_groups)] += 1;
    }
    let best = *counts.iter().max().unwrap();
    counts.iter().position(|&c| c == best).unwrap()
}

fn labelled<F: Fn(&[char]) -> usize>(texts: &[Vec<char>], f: F) -> Vec<(Vec<char>, usize)> {
    texts.iter().map(|t| (t.clone(), f(t))).collect()
}

/// Three-way classification: which third of the alphabet dominates the
/// sentence. Needs the whole sentence, which is what makes it a probe of
/// how much context the encoder aggregates.
pub fn dominant_group_task(
    train_texts: &[Vec<char>],
    dev_texts: &[Vec<char>],
    chars: &[char],
) -> Result<TaskSpec, TrainError> {
    let f = |t: &[char]| dominant_group(t, chars, 3);
    TaskSpec::classification(
        "dominant",
        labelled(train_texts, f),
        labelled(dev_texts, f),
        vec![vec![chars[0]], vec![chars[1]], vec![chars[2]]],
    )
}

/// Binary classification: do the first and last characters fall in the
/// same alphabet third?
pub fn boundary_task(
    train_texts: &[Vec<char>],
    dev_texts: &[Vec<char>],
    chars: &[char],
) -> Result<TaskSpec, TrainError> {
    let f = |t: &[char]| {
        usize::from(group_of(t[0], chars, 3) == group_of(*t.last().unwrap(), chars, 3))
    };
    TaskSpec::classification(
        "boundary",
        labelled(train_texts, f),
        labelled(dev_texts, f),
        vec![vec![chars[0]], vec![chars[1]]],
    )
}

fn clean_texts(pairs: &[SentencePair], limit: usize) -> Vec<Vec<char>> {
    pairs
        .iter()
        .take(limit)
        .map(|p| p.target().to_vec())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tagging,
    TaggingMft,
    Relm,
    RelmPrompt,
    Autoregressive,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Tagging => "tagging",
            Method::TaggingMft => "tagging_mft",
            Method::Relm => "relm",
            Method::RelmPrompt => "relm_prompt",
            Method::Autoregressive => "autoregressive",
        }
    }

    pub fn objective(&self) -> Objective {
        match self {
            Method::Tagging | Method::TaggingMft => Objective::Tagging,
            Method::Relm | Method::RelmPrompt => Objective::Rephrase,
            Method::Autoregressive => Objective::Autoregressive,
        }
    }

    /// The method's training recipe on top of a shared budget. Plain
    /// tagging and the autoregressive model train unmasked; the masked
    /// variants use the non-error policy at `mask_rate`.
    pub fn train_config(
        &self,
        base: &TrainConfig,
        mask_rate: f64,
        prompt_len: usize,
        seed: u64,
    ) -> TrainConfig {
        let policy = match self {
            Method::Tagging | Method::Autoregressive => MaskPolicy::none(),
            Method::TaggingMft | Method::Relm | Method::RelmPrompt => {
                MaskPolicy::mask_non_error(mask_rate).expect("suite mask rate is valid")
            }
        };
        TrainConfig {
            objective: self.objective(),
            policy,
            prompt_len: if *self == Method::RelmPrompt { prompt_len } else { 0 },
            seed,
            ..base.clone()
        }
    }
}

/// Decodes a test set with the decoder matching the training objective and
/// scores it.
pub fn evaluate_correction(
    params: &Params,
    model_cfg: &ModelConfig,
    objective: Objective,
    prompt_len: usize,
    prompt_offset: TokenId,
    pairs: &[SentencePair],
    vocab: &Vocab,
) -> Result<MetricsReport, ExperimentError> {
    let sources: Vec<Vec<char>> = pairs.iter().map(|p| p.source().to_vec()).collect();
    let preds = match objective {
        Objective::Tagging => tagging_correct_batch(params, model_cfg, &sources, vocab)?,
        Objective::Rephrase => relm_correct_batch(
            params,
            model_cfg,
            &sources,
            vocab,
            prompt_len,
            prompt_offset,
        )?,
        Objective::Autoregressive => ar_correct_batch(params, model_cfg, &sources, vocab, 4)?
            .into_iter()
            .map(|d| d.output)
            .collect(),
    };
    Ok(evaluate(pairs, &preds)?)
}

/// The desk-scale model: small enough to train on one core in minutes,
/// big enough to show the objective gaps.
pub fn desk_model(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        d_model: 48,
        n_heads: 4,
        n_layers: 2,
        d_ff: 96,
        max_len: 48,
        vocab_size,
        dropout: 0.1,
        attention_default: Attention::Bidirectional,
        tie_embeddings: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub world: WorldConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    /// Masking rate for methods that train with the non-error policy.
    pub mask_rate: f64,
    /// Prompt ids per task for prompt-using methods.
    pub prompt_len: usize,
    /// Model dropout for the suite runs.
    pub dropout: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            train: TrainConfig::default(),
            seeds: vec![0, 1, 2],
            mask_rate: 0.3,
            prompt_len: 4,
            dropout: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRow {
    pub method: String,
    pub seed: u64,
    pub f1_seen: f64,
    pub f1_held: f64,
    pub fpr_held: f64,
    pub recall_held: f64,
    pub precision_held: f64,
    pub dev_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMean {
    pub method: String,
    pub f1_seen: f64,
    pub f1_held: f64,
    pub fpr_held: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub rows: Vec<GenRow>,
    pub means: Vec<MethodMean>,
}

impl GenSummary {
    pub fn mean(&self, method: &str) -> &MethodMean {
        self.means
            .iter()
            .find(|m| m.method == method)
            .expect("method in summary")
    }
}

/// One trained model per (method, seed), retained so probes can reuse the
/// encoders without retraining.
pub struct GenRuns {
    pub world: World,
    pub model_cfg: ModelConfig,
    pub summary: GenSummary,
    pub encoders: Vec<(String, u64, Params)>,
}

fn mean_of(rows: &[GenRow], method: &str) -> MethodMean {
    let sel: Vec<&GenRow> = rows.iter().filter(|r| r.method == method).collect();
    let n = sel.len() as f64;
    MethodMean {
        method: method.to_string(),
        f1_seen: sel.iter().map(|r| r.f1_seen).sum::<f64>() / n,
        f1_held: sel.iter().map(|r| r.f1_held).sum::<f64>() / n,
        fpr_held: sel.iter().map(|r| r.fpr_held).sum::<f64>() / n,
    }
}

/// Trains the three objectives on identical budgets and scores them on the
/// seen-edit and held-out-edit test splits.
pub fn run_generalization_suite(
    cfg: &SuiteConfig,
    out_dir: Option<&Path>,
) -> Result<GenRuns, ExperimentError> {
    run_generalization_methods(
        cfg,
        &[Method::Tagging, Method::Relm, Method::Autoregressive],
        out_dir,
    )
}

pub fn run_generalization_methods(
    cfg: &SuiteConfig,
    methods: &[Method],
    out_dir: Option<&Path>,
) -> Result<GenRuns, ExperimentError> {
    if cfg.seeds.is_empty() {
        return Err(ExperimentError::NoSeeds);
    }
    let world = build_world(&cfg.world)?;
    let mut model_cfg = desk_model(world.vocab.size());
    model_cfg.dropout = cfg.dropout;
    let mut rows = Vec::new();
    let mut encoders = Vec::new();

    for &seed in &cfg.seeds {
        for &method in methods {
            let tc = method.train_config(&cfg.train, cfg.mask_rate, cfg.prompt_len, seed);
            let mut task = TaskSpec::correction("csc", world.train.clone(), world.dev.clone());
            if method == Method::RelmPrompt {
                task = task.with_prompt();
            }
            let out = train_single(&task, &world.vocab, &model_cfg, &tc)?;
            let seen = evaluate_correction(
                &out.best_params,
                &model_cfg,
                tc.objective,
                tc.prompt_len,
                task.prompt_offset,
                &world.test_seen,
                &world.vocab,
            )?;
            let held = evaluate_correction(
                &out.best_params,
                &model_cfg,
                tc.objective,
                tc.prompt_len,
                task.prompt_offset,
                &world.test_held,
                &world.vocab,
            )?;
            rows.push(GenRow {
                method: method.name().to_string(),
                seed,
                f1_seen: seen.correction_f1,
                f1_held: held.correction_f1,
                fpr_held: held.fpr,
                recall_held: held.correction_recall,
                precision_held: held.correction_precision,
                dev_f1: out.best_metric,
            });
            encoders.push((method.name().to_string(), seed, out.best_params));
        }
    }

    let means = methods.iter().map(|m| mean_of(&rows, m.name())).collect();
    let summary = GenSummary { rows, means };

    if let Some(base) = out_dir {
        let dir = run_dir(base, "generalization", cfg)?;
        let mut csv = String::from(
            "method,seed,f1_seen,f1_held,fpr_held,recall_held,precision_held,dev_f1\n",
        );
        for r in &summary.rows {
            let _ = writeln!(
                csv,
                "{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
                r.method, r.seed, r.f1_seen, r.f1_held, r.fpr_held, r.recall_held,
                r.precision_held, r.dev_f1
            );
        }
        write_outputs(&dir, "generalization", &csv, &summary, cfg)?;
    }

    Ok(GenRuns {
        world,
        model_cfg,
        summary,
        encoders,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskSuiteConfig {
    pub world: WorldConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub rates: Vec<f64>,
    pub strategies: Vec<MaskStrategy>,
    pub dropout: f64,
}

impl Default for MaskSuiteConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            train: TrainConfig::default(),
            seeds: vec![0, 1],
            rates: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.6],
            strategies: vec![MaskStrategy::MaskNonError, MaskStrategy::MaskAny],
            dropout: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRow {
    pub strategy: String,
    pub rate: f64,
    pub seed: u64,
    pub f1_seen: f64,
    pub f1_held: f64,
    pub fpr_held: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSummary {
    pub rows: Vec<MaskRow>,
    /// Mean held-out F1 per (strategy, rate).
    pub grid: Vec<(String, f64, f64)>,
}

impl MaskSummary {
    pub fn grid_f1(&self, strategy: &str, rate: f64) -> f64 {
        self.grid
            .iter()
            .find(|(s, r, _)| s == strategy && (*r - rate).abs() < 1e-12)
            .map(|(_, _, f1)| *f1)
            .expect("cell in grid")
    }
}

fn strategy_name(s: MaskStrategy) -> &'static str {
    match s {
        MaskStrategy::None => "none",
        MaskStrategy::MaskAny => "mask_any",
        MaskStrategy::MaskNonError => "mask_non_error",
    }
}

/// Sweeps masking strategy and rate for the infilling objective. Rate zero
/// trains with no masking at all.
pub fn run_mask_suite(
    cfg: &MaskSuiteConfig,
    out_dir: Option<&Path>,
) -> Result<MaskSummary, ExperimentError> {
    if cfg.seeds.is_empty() {
        return Err(ExperimentError::NoSeeds);
    }
    let world = build_world(&cfg.world)?;
    let mut model_cfg = desk_model(world.vocab.size());
    model_cfg.dropout = cfg.dropout;
    let mut rows = Vec::new();

    for &strategy in &cfg.strategies {
        for &rate in &cfg.rates {
            for &seed in &cfg.seeds {
                let policy = if rate == 0.0 || strategy == MaskStrategy::None {
                    MaskPolicy::none()
                } else {
                    MaskPolicy::new(strategy, rate).expect("suite rate is valid")
                };
                let tc = TrainConfig {
                    objective: Objective::Rephrase,
                    policy,
                    prompt_len: 0,
                    seed,
                    ..cfg.train.clone()
                };
                let task = TaskSpec::correction("csc", world.train.clone(), world.dev.clone());
                let out = train_single(&task, &world.vocab, &model_cfg, &tc)?;
                let seen = evaluate_correction(
                    &out.best_params,
                    &model_cfg,
                    tc.objective,
                    0,
                    task.prompt_offset,
                    &world.test_seen,
                    &world.vocab,
                )?;
                let held = evaluate_correction(
                    &out.best_params,
                    &model_cfg,
                    tc.objective,
                    0,
                    task.prompt_offset,
                    &world.test_held,
                    &world.vocab,
                )?;
                rows.push(MaskRow {
                    strategy: strategy_name(strategy).to_string(),
                    rate,
                    seed,
                    f1_seen: seen.correction_f1,
                    f1_held: held.correction_f1,
                    fpr_held: held.fpr,
                });
            }
        }
    }

    let mut grid = Vec::new();
    for &strategy in &cfg.strategies {
        for &rate in &cfg.rates {
            let sel: Vec<&MaskRow> = rows
                .iter()
                .filter(|r| r.strategy == strategy_name(strategy) && r.rate == rate)
                .collect();
            let f1 = sel.iter().map(|r| r.f1_held).sum::<f64>() / sel.len() as f64;
            grid.push((strategy_name(strategy).to_string(), rate, f1));
        }
    }
    let summary = MaskSummary { rows, grid };

    if let Some(base) = out_dir {
        let dir = run_dir(base, "mask", cfg)?;
        let mut csv = String::from("strategy,rate,seed,f1_seen,f1_held,fpr_held\n");
        for r in &summary.rows {
            let _ = writeln!(
                csv,
                "{},{},{},{:.3},{:.3},{:.3}",
                r.strategy, r.rate, r.seed, r.f1_seen, r.f1_held, r.fpr_held
            );
        }
        write_outputs(&dir, "mask", &csv, &summary, cfg)?;
    }

    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultitaskSuiteConfig {
    pub world: WorldConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub mask_rate: f64,
    pub prompt_len: usize,
    pub methods: Vec<Method>,
    /// Clean sentences used per classification task.
    pub n_class_train: usize,
    pub n_class_dev: usize,
    /// Budget for standalone classification runs.
    pub class_steps: usize,
    pub dropout: f64,
}

impl Default for MultitaskSuiteConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            train: TrainConfig::default(),
            seeds: vec![0, 1],
            mask_rate: 0.3,
            prompt_len: 4,
            methods: vec![
                Method::Tagging,
                Method::TaggingMft,
                Method::Relm,
                Method::RelmPrompt,
            ],
            n_class_train: 2000,
            n_class_dev: 300,
            class_steps: 500,
            dropout: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultitaskRow {
    pub method: String,
    pub seed: u64,
    pub csc_f1_single: f64,
    pub csc_f1_multi: f64,
    /// Percent of single-task F1 lost when training multi-task.
    pub relative_drop: f64,
    pub class_single: Vec<(String, f64)>,
    pub class_multi: Vec<(String, f64)>,
    /// Largest |single - multi| accuracy difference over tasks.
    pub class_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultitaskSummary {
    pub rows: Vec<MultitaskRow>,
}

impl MultitaskSummary {
    pub fn mean_drop(&self, method: &str) -> f64 {
        let sel: Vec<&MultitaskRow> = self.rows.iter().filter(|r| r.method == method).collect();
        sel.iter().map(|r| r.relative_drop).sum::<f64>() / sel.len() as f64
    }

    pub fn max_class_shift(&self, method: &str) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.class_shift)
            .fold(0.0, f64::max)
    }
}

fn class_tasks(world: &World, cfg: &MultitaskSuiteConfig) -> Result<Vec<TaskSpec>, TrainError> {
    let train_texts = clean_texts(&world.train, cfg.n_class_train);
    let dev_texts = clean_texts(&world.dev, cfg.n_class_dev);
    Ok(vec![
        dominant_group_task(&train_texts, &dev_texts, &world.chars)?,
        boundary_task(&train_texts, &dev_texts, &world.chars)?,
    ])
}

/// Measures multi-task interference: correction F1 alone versus shared
/// with two classification tasks, per method.
pub fn run_multitask_suite(
    cfg: &MultitaskSuiteConfig,
    out_dir: Option<&Path>,
) -> Result<MultitaskSummary, ExperimentError> {
    if cfg.seeds.is_empty() {
        return Err(ExperimentError::NoSeeds);
    }
    let world = build_world(&cfg.world)?;
    let mut model_cfg = desk_model(world.vocab.size());
    model_cfg.dropout = cfg.dropout;
    let mut rows = Vec::new();

    for &seed in &cfg.seeds {
        // Standalone classification runs are method-independent: they use
        // the slot template regardless of the correction objective.
        let mut single_class = Vec::new();
        for task in class_tasks(&world, cfg)? {
            let tc = TrainConfig {
                objective: Objective::Rephrase,
                policy: MaskPolicy::none(),
                prompt_len: cfg.prompt_len,
                steps: cfg.class_steps,
                seed,
                ..cfg.train.clone()
            };
            let out = train_single(&task, &world.vocab, &model_cfg, &tc)?;
            single_class.push((task.name.clone(), out.final_metrics[0].1));
        }

        for &method in &cfg.methods {
            let tc = method.train_config(&cfg.train, cfg.mask_rate, cfg.prompt_len, seed);
            let mut csc_task =
                TaskSpec::correction("csc", world.train.clone(), world.dev.clone());
            if method == Method::RelmPrompt {
                csc_task = csc_task.with_prompt();
            }
            let single = train_single(&csc_task, &world.vocab, &model_cfg, &tc)?;
            let single_plen = if csc_task.uses_prompts(tc.objective) {
                tc.prompt_len
            } else {
                0
            };
            let single_f1 = evaluate_correction(
                &single.best_params,
                &model_cfg,
                tc.objective,
                single_plen,
                csc_task.prompt_offset,
                &world.test_seen,
                &world.vocab,
            )?
            .correction_f1;

            // The shared model always trains with prompts enabled so the
            // two classification tasks stay distinguishable; whether the
            // correction task itself prompts is the method's choice.
            let mut tasks = vec![csc_task];
            tasks.extend(class_tasks(&world, cfg)?);
            assign_prompt_offsets(&mut tasks, cfg.prompt_len, &world.vocab)?;
            let mtc = TrainConfig {
                prompt_len: cfg.prompt_len,
                ..tc.clone()
            };
            let multi = train_multitask(&tasks, &world.vocab, &model_cfg, &mtc)?;
            let multi_plen = if tasks[0].uses_prompts(mtc.objective) {
                cfg.prompt_len
            } else {
                0
            };
            let multi_f1 = evaluate_correction(
                &multi.best_params,
                &model_cfg,
                mtc.objective,
                multi_plen,
                tasks[0].prompt_offset,
                &world.test_seen,
                &world.vocab,
            )?
            .correction_f1;

            let class_multi: Vec<(String, f64)> = multi
                .final_metrics
                .iter()
                .filter(|(name, _)| name != "csc")
                .cloned()
                .collect();
            let class_shift = single_class
                .iter()
                .map(|(name, acc)| {
                    let multi_acc = class_multi
                        .iter()
                        .find(|(n, _)| n == name)
                        .map(|(_, a)| *a)
                        .unwrap_or(0.0);
                    (acc - multi_acc).abs()
                })
                .fold(0.0, f64::max);
            let relative_drop = if single_f1 > 0.0 {
                100.0 * (single_f1 - multi_f1) / single_f1
            } else {
                0.0
            };

            rows.push(MultitaskRow {
                method: method.name().to_string(),
                seed,
                csc_f1_single: single_f1,
                csc_f1_multi: multi_f1,
                relative_drop,
                class_single: single_class.clone(),
                class_multi,
                class_shift,
            });
        }
    }

    let summary = MultitaskSummary { rows };
    if let Some(base) = out_dir {
        let dir = run_dir(base, "multitask", cfg)?;
        let mut csv =
            String::from("method,seed,csc_f1_single,csc_f1_multi,relative_drop,class_shift\n");
        for r in &summary.rows {
            let _ = writeln!(
                csv,
                "{},{},{:.3},{:.3},{:.3},{:.3}",
                r.method, r.seed, r.csc_f1_single, r.csc_f1_multi, r.relative_drop, r.class_shift
            );
        }
        write_outputs(&dir, "multitask", &csv, &summary, cfg)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeSuiteConfig {
    pub world: WorldConfig,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub seeds: Vec<u64>,
    pub mask_rate: f64,
    pub n_class_train: usize,
    pub n_class_dev: usize,
    pub dropout: f64,
}

impl Default for ProbeSuiteConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            train: TrainConfig::default(),
            probe: ProbeConfig::default(),
            seeds: vec![0, 1],
            mask_rate: 0.3,
            n_class_train: 2000,
            n_class_dev: 300,
            dropout: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub encoder: String,
    pub seed: u64,
    pub dev_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub rows: Vec<ProbeRow>,
    pub majority_baseline: f64,
}

impl ProbeSummary {
    pub fn mean(&self, encoder: &str) -> f64 {
        let sel: Vec<&ProbeRow> = self.rows.iter().filter(|r| r.encoder == encoder).collect();
        sel.iter().map(|r| r.dev_accuracy).sum::<f64>() / sel.len() as f64
    }
}

/// Fraction of dev texts in the most common class, in percent. Probes must
/// clear this to show their features carry any signal.
pub fn majority_baseline(task: &TaskSpec) -> f64 {
    let mut counts = vec![0usize; task.verbalizers.len()];
    for (_, label) in &task.dev_texts {
        counts[*label] += 1;
    }
    100.0 * *counts.iter().max().unwrap() as f64 / task.dev_texts.len().max(1) as f64
}

/// Probes already trained encoders with a fresh linear head on the
/// dominant-group task.
pub fn probe_encoders(
    encoders: &[(String, u64, Params)],
    world: &World,
    model_cfg: &ModelConfig,
    probe_cfg: &ProbeConfig,
    n_class_train: usize,
    n_class_dev: usize,
) -> Result<(ProbeSummary, TaskSpec), ExperimentError> {
    let train_texts = clean_texts(&world.train, n_class_train);
    let dev_texts = clean_texts(&world.dev, n_class_dev);
    let task = dominant_group_task(&train_texts, &dev_texts, &world.chars)?;
    let mut rows = Vec::new();
    for (name, seed, params) in encoders {
        let outcome = linear_probe(params, model_cfg, &task, &world.vocab, probe_cfg)?;
        rows.push(ProbeRow {
            encoder: name.clone(),
            seed: *seed,
            dev_accuracy: outcome.dev_accuracy,
        });
    }
    let majority = majority_baseline(&task);
    Ok((
        ProbeSummary {
            rows,
            majority_baseline: majority,
        },
        task,
    ))
}

/// Trains infilling and tagging encoders per seed, then compares linear
/// probes on their frozen features against a random-initialization
/// control.
pub fn run_probe_suite(
    cfg: &ProbeSuiteConfig,
    out_dir: Option<&Path>,
) -> Result<ProbeSummary, ExperimentError> {
    if cfg.seeds.is_empty() {
        return Err(ExperimentError::NoSeeds);
    }
    let world = build_world(&cfg.world)?;
    let mut model_cfg = desk_model(world.vocab.size());
    model_cfg.dropout = cfg.dropout;
    let mut encoders = Vec::new();
    for &seed in &cfg.seeds {
        for method in [Method::Relm, Method::Tagging] {
            let tc = method.train_config(&cfg.train, cfg.mask_rate, 0, seed);
            let task = TaskSpec::correction("csc", world.train.clone(), world.dev.clone());
            let out = train_single(&task, &world.vocab, &model_cfg, &tc)?;
            encoders.push((method.name().to_string(), seed, out.best_params));
        }
        encoders.push((
            "random".to_string(),
            seed,
            init_model(&model_cfg, mix(seed, 0x70))?,
        ));
    }
    let (summary, _) = probe_encoders(
        &encoders,
        &world,
        &model_cfg,
        &cfg.probe,
        cfg.n_class_train,
        cfg.n_class_dev,
    )?;

    if let Some(base) = out_dir {
        let dir = run_dir(base, "probe", cfg)?;
        let mut csv = String::from("encoder,seed,dev_accuracy\n");
        for r in &summary.rows {
            let _ = writeln!(csv, "{},{},{:.3}", r.encoder, r.seed, r.dev_accuracy);
        }
        write_outputs(&dir, "probe", &csv, &summary, cfg)?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn small_world_cfg() -> WorldConfig {
        WorldConfig {
            synth: SynthConfig {
                vocab_size: 12,
                corpus_size: 700,
                ..SynthConfig::default()
            },
            per_char: 3,
            holdout_fraction: 0.25,
            n_dev: 60,
            n_test: 120,
            prompt_capacity: 16,
        }
    }

    #[test]
    fn world_splits_are_sized_and_edit_disjoint() {
        let cfg = small_world_cfg();
        let w = build_world(&cfg).unwrap();
        assert_eq!(w.train.len(), 700 - 60 - 240);
        assert_eq!(w.dev.len(), 60);
        assert_eq!(w.test_seen.len(), 120);
        assert_eq!(w.test_held.len(), 120);

        let train_pairs: BTreeSet<(char, char)> = w.conf_train.pairs().into_iter().collect();
        let held_pairs: BTreeSet<(char, char)> = w.conf_held.pairs().into_iter().collect();
        assert!(train_pairs.is_disjoint(&held_pairs));

        // Every injected edit (wrong char, right char) must come from the
        // split's own half.
        let check = |pairs: &[SentencePair], allowed: &BTreeSet<(char, char)>| {
            for p in pairs {
                for i in p.error_positions() {
                    let edit = (p.source()[i], p.target()[i]);
                    assert!(allowed.contains(&edit), "edit {edit:?} outside its half");
                }
            }
        };
        check(&w.train, &train_pairs);
        check(&w.test_seen, &train_pairs);
        check(&w.test_held, &held_pairs);

        let w2 = build_world(&cfg).unwrap();
        assert_eq!(w.train, w2.train);
        assert_eq!(w.test_held, w2.test_held);
    }

    #[test]
    fn world_rejects_thin_corpus() {
        let mut cfg = small_world_cfg();
        cfg.synth.corpus_size = 100;
        assert!(matches!(
            build_world(&cfg),
            Err(ExperimentError::CorpusTooSmall { .. })
        ));
    }

    #[test]
    fn group_labels_are_contiguous_thirds() {
        let chars: Vec<char> = "abcdefghi".chars().collect();
        let groups: Vec<usize> = chars.iter().map(|&c| group_of(c, &chars, 3)).collect();
        assert_eq!(groups, vec![0, 0, 0, 1, 1, 1, 2, 2, 2]);
        assert_eq!(dominant_group(&['a', 'b', 'i'], &chars, 3), 0);
        assert_eq!(dominant_group(&['i', 'h', 'a'], &chars, 3), 2);
        // Tie between groups 0 and 2 resolves to the lowest.
        assert_eq!(dominant_group(&['a', 'i'], &chars, 3), 0);
    }

    #[test]
    fn run_dir_name_tracks_config() {
        let tmp = tempfile::tempdir().unwrap();
        let a = run_dir(tmp.path(), "generalization", &SuiteConfig::default()).unwrap();
        let b = run_dir(tmp.path(), "generalization", &SuiteConfig::default()).unwrap();
        assert_eq!(a, b);
        let other = SuiteConfig {
            mask_rate: 0.4,
            ..SuiteConfig::default()
        };
        let c = run_dir(tmp.path(), "generalization", &other).unwrap();
        assert_ne!(a, c);
    }

    fn smoke_train() -> TrainConfig {
        TrainConfig {
            steps: 30,
            batch_size: 8,
            eval_every: 0,
            dev_limit: 40,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn generalization_suite_smoke() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = SuiteConfig {
            world: small_world_cfg(),
            train: smoke_train(),
            seeds: vec![0],
            ..SuiteConfig::default()
        };
        let runs = run_generalization_suite(&cfg, Some(tmp.path())).unwrap();
        assert_eq!(runs.summary.rows.len(), 3);
        assert_eq!(runs.encoders.len(), 3);
        for m in ["tagging", "relm", "autoregressive"] {
            assert!(runs.summary.rows.iter().any(|r| r.method == m));
            let mean = runs.summary.mean(m);
            assert!(mean.f1_seen.is_finite());
        }
        let dir = run_dir(tmp.path(), "generalization", &cfg).unwrap();
        let csv = fs::read_to_string(dir.join("generalization.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(dir.join("generalization.json").exists());
        assert!(dir.join("config.json").exists());
    }

    #[test]
    fn mask_suite_smoke() {
        let cfg = MaskSuiteConfig {
            world: small_world_cfg(),
            train: smoke_train(),
            seeds: vec![0],
            rates: vec![0.0, 0.3],
            strategies: vec![MaskStrategy::MaskNonError],
            dropout: 0.1,
        };
        let summary = run_mask_suite(&cfg, None).unwrap();
        assert_eq!(summary.rows.len(), 2);
        let f1 = summary.grid_f1("mask_non_error", 0.3);
        assert!(f1.is_finite());
    }

    #[test]
    fn multitask_suite_smoke() {
        let cfg = MultitaskSuiteConfig {
            world: small_world_cfg(),
            train: smoke_train(),
            seeds: vec![0],
            methods: vec![Method::Relm],
            n_class_train: 120,
            n_class_dev: 40,
            class_steps: 20,
            ..MultitaskSuiteConfig::default()
        };
        let summary = run_multitask_suite(&cfg, None).unwrap();
        assert_eq!(summary.rows.len(), 1);
        let row = &summary.rows[0];
        assert_eq!(row.class_single.len(), 2);
        assert_eq!(row.class_multi.len(), 2);
        assert!(row.class_shift >= 0.0);
    }

    #[test]
    fn probe_suite_smoke() {
        let cfg = ProbeSuiteConfig {
            world: small_world_cfg(),
            train: smoke_train(),
            probe: ProbeConfig {
                steps: 60,
                ..ProbeConfig::default()
            },
            seeds: vec![0],
            n_class_train: 150,
            n_class_dev: 50,
            ..ProbeSuiteConfig::default()
        };
        let summary = run_probe_suite(&cfg, None).unwrap();
        assert_eq!(summary.rows.len(), 3);
        for enc in ["relm", "tagging", "random"] {
            assert!(summary.mean(enc).is_finite(), "{enc} missing");
        }
        assert!(summary.majority_baseline > 0.0);
    }
}

fn run_dir<T: Serialize>(base: &Path, suite: &str, cfg: &T) -> Result<PathBuf, ExperimentError> {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let dir = base.join(format!("{suite}-{:016x}", fnv1a(json.as_bytes())));
    fs::create_dir_all(&dir).map_err(|e| ExperimentError::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    fs::write(path, bytes).map_err(|e| ExperimentError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_outputs<S: Serialize, C: Serialize>(
    dir: &Path,
    suite: &str,
    csv: &str,
    summary: &S,
    cfg: &C,
) -> Result<(), ExperimentError> {
    write_file(&dir.join(format!("{suite}.csv")), csv.as_bytes())?;
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    write_file(&dir.join(format!("{suite}.json")), json.as_bytes())?;
    let cfg_json = serde_json::to_string_pretty(cfg).expect("config serializes");
    write_file(&dir.join("config.json"), cfg_json.as_bytes())?;
    Ok(())
}
