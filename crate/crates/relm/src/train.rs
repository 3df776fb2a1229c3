//! Training loops: single task, multi-task with per-task prompt tables,
//! and a linear probe on a frozen encoder.
//!
//! One engine drives all of it. Each step samples a task (uniformly when
//! there are several), draws a batch with replacement, renders it through
//! the objective's template, and takes one Adam step. Masking policies
//! apply to tagging and rephrasing but never to classification tasks and
//! never at evaluation time. Dev metrics are correction F1 for correction
//! tasks and accuracy for classification; the best-dev parameters are kept
//! alongside the final ones.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decode::{ar_correct_batch, relm_correct_batch, tagging_correct_batch, DecodeError};
use crate::eval::{evaluate, EvalError};
use crate::net::{
    adam_step, forward_hidden, loss_and_grads, AdamHyper, AdamState, Batch, ModelConfig, NetError,
    Params, PromptSpec, init_model,
};
use crate::rng::{mix, stream_rng};
use crate::template::{
    template_autoregressive, template_classification, template_rephrase_with_prompt,
    template_tagging, Attention, EncodedExample, MaskPolicy,
};
use crate::text::{SentencePair, TokenId, Vocab};

const STREAM_BATCH: u64 = 0x51;
const STREAM_TEMPLATE: u64 = 0x52;
const STREAM_DROP: u64 = 0x53;
const STREAM_PROMPT_TABLE: u64 = 0x54;
const STREAM_PROBE: u64 = 0x55;

const EVAL_CHUNK: usize = 128;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("task {0:?} has an empty dataset")]
    EmptyDataset(String),
    #[error("task {task:?}: {reason}")]
    BadTask { task: String, reason: String },
    #[error("prompt tables need {needed} ids but the vocabulary reserves {capacity}")]
    PromptOverflow { needed: usize, capacity: usize },
    #[error("multi-task training needs at least two tasks")]
    TooFewTasks,
    #[error("task {0:?} is not a classification task")]
    NotClassification(String),
    #[error("model vocab size {model} does not match vocabulary size {vocab}")]
    VocabMismatch { model: usize, vocab: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Tagging,
    Rephrase,
    Autoregressive,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Tagging => "tagging",
            Objective::Rephrase => "rephrase",
            Objective::Autoregressive => "autoregressive",
        })
    }
}

impl FromStr for Objective {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tagging" => Ok(Objective::Tagging),
            "rephrase" => Ok(Objective::Rephrase),
            "autoregressive" => Ok(Objective::Autoregressive),
            other => Err(format!(
                "unknown objective {other:?}; expected tagging, rephrase, or autoregressive"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: Objective,
    pub policy: MaskPolicy,
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    /// Dev evaluation cadence in steps; 0 evaluates only at the end.
    pub eval_every: usize,
    pub seed: u64,
    /// Prompt ids per task; 0 trains without prompts.
    pub prompt_len: usize,
    /// Cap on sentences scored per dev evaluation, to keep mid-run
    /// evaluation cheap. 0 means no cap.
    pub dev_limit: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Rephrase,
            policy: MaskPolicy::mask_non_error(0.3).expect("valid default rate"),
            steps: 2000,
            batch_size: 32,
            adam: AdamHyper::default(),
            eval_every: 250,
            seed: 0,
            prompt_len: 0,
            dev_limit: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Correction,
    Classification,
}

/// A named training task. Correction tasks carry sentence pairs;
/// classification tasks carry labeled texts plus one verbalizer word per
/// label, all of equal length so every example renders to the same number
/// of slots.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub name: String,
    pub kind: TaskKind,
    pub train_pairs: Vec<SentencePair>,
    pub dev_pairs: Vec<SentencePair>,
    pub train_texts: Vec<(Vec<char>, usize)>,
    pub dev_texts: Vec<(Vec<char>, usize)>,
    pub verbalizers: Vec<Vec<char>>,
    /// First prompt id owned by this task.
    pub prompt_offset: TokenId,
    /// Whether a correction task prepends prompts when the configuration
    /// enables them. Classification tasks always prompt: without prompt
    /// ids, two slot tasks over the same texts would be indistinguishable.
    pub use_prompt: bool,
}

impl TaskSpec {
    pub fn correction(
        name: &str,
        train_pairs: Vec<SentencePair>,
        dev_pairs: Vec<SentencePair>,
    ) -> Self {
        Self {
            name: name.to_string(),
            kind: TaskKind::Correction,
            train_pairs,
            dev_pairs,
            train_texts: Vec::new(),
            dev_texts: Vec::new(),
            verbalizers: Vec::new(),
            prompt_offset: Vocab::PROMPT_BASE,
            use_prompt: false,
        }
    }

    pub fn with_prompt(mut self) -> Self {
        self.use_prompt = true;
        self
    }

    pub fn classification(
        name: &str,
        train_texts: Vec<(Vec<char>, usize)>,
        dev_texts: Vec<(Vec<char>, usize)>,
        verbalizers: Vec<Vec<char>>,
    ) -> Result<Self, TrainError> {
        let bad = |reason: String| TrainError::BadTask {
            task: name.to_string(),
            reason,
        };
        if verbalizers.len() < 2 {
            return Err(bad("needs at least two labels".into()));
        }
        let l = verbalizers[0].len();
        if l == 0 || verbalizers.iter().any(|v| v.len() != l) {
            return Err(bad(format!(
                "verbalizers must be nonempty and share one length, got {:?}",
                verbalizers.iter().map(|v| v.len()).collect::<Vec<_>>()
            )));
        }
        for (text, label) in train_texts.iter().chain(&dev_texts) {
            if *label >= verbalizers.len() {
                return Err(bad(format!(
                    "label {label} out of range for {} labels",
                    verbalizers.len()
                )));
            }
            if text.is_empty() {
                return Err(bad("empty text".into()));
            }
        }
        Ok(Self {
            name: name.to_string(),
            kind: TaskKind::Classification,
            train_pairs: Vec::new(),
            dev_pairs: Vec::new(),
            train_texts,
            dev_texts,
            verbalizers,
            prompt_offset: Vocab::PROMPT_BASE,
            use_prompt: true,
        })
    }

    pub fn n_train(&self) -> usize {
        match self.kind {
            TaskKind::Correction => self.train_pairs.len(),
            TaskKind::Classification => self.train_texts.len(),
        }
    }

    pub fn uses_prompts(&self, objective: Objective) -> bool {
        match self.kind {
            TaskKind::Classification => true,
            TaskKind::Correction => self.use_prompt && objective == Objective::Rephrase,
        }
    }
}

/// Gives each task its own block of prompt ids, in task order. Fails if
/// the vocabulary's reserved prompt block is too small.
pub fn assign_prompt_offsets(
    tasks: &mut [TaskSpec],
    prompt_len: usize,
    vocab: &Vocab,
) -> Result<(), TrainError> {
    let needed = tasks.len() * prompt_len;
    if needed > vocab.prompt_capacity() {
        return Err(TrainError::PromptOverflow {
            needed,
            capacity: vocab.prompt_capacity(),
        });
    }
    for (i, task) in tasks.iter_mut().enumerate() {
        task.prompt_offset = Vocab::PROMPT_BASE + i * prompt_len;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub task: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_metric: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: Params,
    /// Parameters at the best dev evaluation (equal to `params` when the
    /// final evaluation was best).
    pub best_params: Params,
    pub best_step: usize,
    /// Mean dev metric across tasks at the best step.
    pub best_metric: f64,
    /// Per-task dev metric at the final step.
    pub final_metrics: Vec<(String, f64)>,
    pub log: Vec<LogRecord>,
}

fn check_tasks(tasks: &[TaskSpec], cfg: &TrainConfig, vocab: &Vocab) -> Result<(), TrainError> {
    for task in tasks {
        if task.n_train() == 0 {
            return Err(TrainError::EmptyDataset(task.name.clone()));
        }
        if cfg.prompt_len > 0 && task.uses_prompts(cfg.objective) {
            let lo = task.prompt_offset;
            let hi = lo + cfg.prompt_len;
            if lo < Vocab::PROMPT_BASE || hi > vocab.char_base() {
                return Err(TrainError::PromptOverflow {
                    needed: hi - Vocab::PROMPT_BASE,
                    capacity: vocab.prompt_capacity(),
                });
            }
        }
        if task.kind == TaskKind::Classification {
            for (text, _) in task.train_texts.iter().chain(&task.dev_texts) {
                for &ch in text {
                    if vocab.id_of(ch).is_none() {
                        return Err(TrainError::BadTask {
                            task: task.name.clone(),
                            reason: format!("text contains unknown character {ch:?}"),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

fn render_example(
    task: &TaskSpec,
    index: usize,
    vocab: &Vocab,
    cfg: &TrainConfig,
    seed: u64,
) -> EncodedExample {
    match task.kind {
        TaskKind::Correction => {
            let pair = &task.train_pairs[index];
            let plen = if task.uses_prompts(cfg.objective) {
                cfg.prompt_len
            } else {
                0
            };
            match cfg.objective {
                Objective::Tagging => template_tagging(pair, vocab, &cfg.policy, seed),
                Objective::Rephrase => template_rephrase_with_prompt(
                    pair,
                    vocab,
                    &cfg.policy,
                    plen,
                    task.prompt_offset,
                    seed,
                ),
                Objective::Autoregressive => template_autoregressive(pair, vocab),
            }
        }
        TaskKind::Classification => {
            let (text, label) = &task.train_texts[index];
            template_classification(
                text,
                &task.verbalizers[*label],
                vocab,
                cfg.prompt_len,
                task.prompt_offset,
            )
        }
    }
}

/// Scores texts against a classification task's verbalizers: one forward
/// pass per chunk, label score = sum of slot logits for the label's
/// verbalizer characters, ties to the lowest label.
pub fn classify_batch(
    params: &Params,
    model_cfg: &ModelConfig,
    task: &TaskSpec,
    texts: &[Vec<char>],
    vocab: &Vocab,
    prompt_len: usize,
) -> Result<Vec<usize>, TrainError> {
    if task.kind != TaskKind::Classification {
        return Err(TrainError::NotClassification(task.name.clone()));
    }
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(EVAL_CHUNK) {
        let examples: Vec<EncodedExample> = chunk
            .iter()
            .map(|text| {
                template_classification(
                    text,
                    &task.verbalizers[0],
                    vocab,
                    prompt_len,
                    task.prompt_offset,
                )
            })
            .collect();
        let batch = Batch::from_examples(&examples, model_cfg)?;
        let logits = crate::net::forward_eval(params, model_cfg, &batch)?;
        for (r, text) in chunk.iter().enumerate() {
            let slot0 = prompt_len + text.len() + 1;
            let mut best = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for (label, verb) in task.verbalizers.iter().enumerate() {
                let mut score = 0.0;
                for (i, &ch) in verb.iter().enumerate() {
                    score += logits[[r, slot0 + i, vocab.encode_char(ch)]];
                }
                if score > best_score {
                    best = label;
                    best_score = score;
                }
            }
            out.push(best);
        }
    }
    Ok(out)
}

fn correction_dev_metric(
    params: &Params,
    model_cfg: &ModelConfig,
    task: &TaskSpec,
    cfg: &TrainConfig,
    vocab: &Vocab,
) -> Result<f64, TrainError> {
    let pairs: &[SentencePair] = if cfg.dev_limit > 0 && task.dev_pairs.len() > cfg.dev_limit {
        &task.dev_pairs[..cfg.dev_limit]
    } else {
        &task.dev_pairs
    };
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let sources: Vec<Vec<char>> = pairs.iter().map(|p| p.source().to_vec()).collect();
    let plen = if task.uses_prompts(cfg.objective) {
        cfg.prompt_len
    } else {
        0
    };
    let preds = match cfg.objective {
        Objective::Tagging => tagging_correct_batch(params, model_cfg, &sources, vocab)?,
        Objective::Rephrase => relm_correct_batch(
            params,
            model_cfg,
            &sources,
            vocab,
            plen,
            task.prompt_offset,
        )?,
        Objective::Autoregressive => ar_correct_batch(params, model_cfg, &sources, vocab, 4)?
            .into_iter()
            .map(|d| d.output)
            .collect(),
    };
    Ok(evaluate(pairs, &preds)?.correction_f1)
}

fn classification_dev_metric(
    params: &Params,
    model_cfg: &ModelConfig,
    task: &TaskSpec,
    cfg: &TrainConfig,
    vocab: &Vocab,
) -> Result<f64, TrainError> {
    let texts: &[(Vec<char>, usize)] = if cfg.dev_limit > 0 && task.dev_texts.len() > cfg.dev_limit
    {
        &task.dev_texts[..cfg.dev_limit]
    } else {
        &task.dev_texts
    };
    if texts.is_empty() {
        return Ok(0.0);
    }
    let inputs: Vec<Vec<char>> = texts.iter().map(|(t, _)| t.clone()).collect();
    let preds = classify_batch(params, model_cfg, task, &inputs, vocab, cfg.prompt_len)?;
    let hits = preds
        .iter()
        .zip(texts)
        .filter(|(p, (_, l))| *p == l)
        .count();
    Ok(100.0 * hits as f64 / texts.len() as f64)
}

fn dev_metric(
    params: &Params,
    model_cfg: &ModelConfig,
    task: &TaskSpec,
    cfg: &TrainConfig,
    vocab: &Vocab,
) -> Result<f64, TrainError> {
    match task.kind {
        TaskKind::Correction => correction_dev_metric(params, model_cfg, task, cfg, vocab),
        TaskKind::Classification => classification_dev_metric(params, model_cfg, task, cfg, vocab),
    }
}

fn train_engine(
    tasks: &[TaskSpec],
    vocab: &Vocab,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if model_cfg.vocab_size != vocab.size() {
        return Err(TrainError::VocabMismatch {
            model: model_cfg.vocab_size,
            vocab: vocab.size(),
        });
    }
    check_tasks(tasks, cfg, vocab)?;

    let mut params = init_model(model_cfg, cfg.seed)?;
    if cfg.prompt_len > 0 {
        for (i, task) in tasks.iter().enumerate() {
            if task.uses_prompts(cfg.objective) {
                params.add_prompt_table(
                    PromptSpec {
                        name: task.name.clone(),
                        id_offset: task.prompt_offset,
                        len: cfg.prompt_len,
                    },
                    model_cfg.d_model,
                    mix(cfg.seed, STREAM_PROMPT_TABLE + i as u64),
                );
            }
        }
    }

    let mut adam = AdamState::new(&params);
    let mut rng = stream_rng(cfg.seed, STREAM_BATCH);
    let template_seed = mix(cfg.seed, STREAM_TEMPLATE);
    let mut log = Vec::new();
    let mut best: Option<(usize, f64, Params)> = None;

    let eval_all = |params: &Params, step: usize, log: &mut Vec<LogRecord>| -> Result<Vec<(String, f64)>, TrainError> {
        let mut metrics = Vec::with_capacity(tasks.len());
        for task in tasks {
            let m = dev_metric(params, model_cfg, task, cfg, vocab)?;
            log.push(LogRecord {
                step,
                task: task.name.clone(),
                loss: None,
                dev_metric: Some(m),
            });
            metrics.push((task.name.clone(), m));
        }
        Ok(metrics)
    };

    for step in 1..=cfg.steps {
        let ti = if tasks.len() == 1 {
            0
        } else {
            rng.gen_range(0..tasks.len())
        };
        let task = &tasks[ti];
        let n = task.n_train();
        let examples: Vec<EncodedExample> = (0..cfg.batch_size)
            .map(|j| {
                let index = rng.gen_range(0..n);
                let seed = mix(template_seed, (step * cfg.batch_size + j) as u64);
                render_example(task, index, vocab, cfg, seed)
            })
            .collect();
        let batch = Batch::from_examples(&examples, model_cfg)?;
        let drop_seed = mix(mix(cfg.seed, STREAM_DROP), step as u64);
        let (loss_value, grads) = loss_and_grads(&params, model_cfg, &batch, Some(drop_seed))?;
        adam_step(&mut params, &grads, &mut adam, &cfg.adam)?;
        log.push(LogRecord {
            step,
            task: task.name.clone(),
            loss: Some(loss_value),
            dev_metric: None,
        });

        if cfg.eval_every > 0 && step % cfg.eval_every == 0 && step < cfg.steps {
            let metrics = eval_all(&params, step, &mut log)?;
            let mean = metrics.iter().map(|(_, m)| m).sum::<f64>() / metrics.len() as f64;
            if best.as_ref().map_or(true, |(_, b, _)| mean > *b) {
                best = Some((step, mean, params.clone()));
            }
        }
    }

    let final_metrics = eval_all(&params, cfg.steps, &mut log)?;
    let final_mean =
        final_metrics.iter().map(|(_, m)| m).sum::<f64>() / final_metrics.len().max(1) as f64;
    let (best_step, best_metric, best_params) = match best {
        Some((s, m, p)) if m > final_mean => (s, m, p),
        _ => (cfg.steps, final_mean, params.clone()),
    };

    Ok(TrainOutcome {
        params,
        best_params,
        best_step,
        best_metric,
        final_metrics,
        log,
    })
}

/// Trains one task from a fresh initialization.
pub fn train_single(
    task: &TaskSpec,
    vocab: &Vocab,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_engine(std::slice::from_ref(task), vocab, model_cfg, cfg)
}

/// Trains several tasks on one shared model, drawing the task uniformly
/// at each step. With `prompt_len > 0` each prompting task gets its own
/// prompt table.
pub fn train_multitask(
    tasks: &[TaskSpec],
    vocab: &Vocab,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if tasks.len() < 2 {
        return Err(TrainError::TooFewTasks);
    }
    train_engine(tasks, vocab, model_cfg, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            steps: 400,
            batch_size: 64,
            adam: AdamHyper {
                lr: 1e-2,
                ..AdamHyper::default()
            },
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct ProbeOutcome {
    pub train_accuracy: f64,
    pub dev_accuracy: f64,
    pub head: Params,
}

/// Position-0 hidden vectors for plain texts: no prompts, no separator,
/// no masks, bidirectional attention. One row per text.
pub fn encode_features(
    params: &Params,
    model_cfg: &ModelConfig,
    texts: &[Vec<char>],
    vocab: &Vocab,
) -> Result<Array2<f64>, TrainError> {
    let mut features = Array2::zeros((texts.len(), model_cfg.d_model));
    let mut row = 0;
    for chunk in texts.chunks(EVAL_CHUNK) {
        let examples: Vec<EncodedExample> = chunk
            .iter()
            .map(|text| {
                let ids = vocab.encode_chars(text);
                let len = ids.len();
                EncodedExample {
                    input_ids: ids,
                    segment_ids: vec![0; len],
                    loss_mask: vec![false; len],
                    label_ids: vec![Vocab::PAD; len],
                    position_ids: (0..len).collect(),
                    attention: Attention::Bidirectional,
                    n_source: len,
                }
            })
            .collect();
        let batch = Batch::from_examples(&examples, model_cfg)?;
        let hidden = forward_hidden(params, model_cfg, &batch)?;
        for r in 0..chunk.len() {
            features
                .slice_mut(s![row, ..])
                .assign(&hidden.slice(s![r, 0, ..]));
            row += 1;
        }
    }
    Ok(features)
}

fn head_logits(features: &Array2<f64>, head: &Params) -> Array2<f64> {
    let w = head.m2("probe.w");
    let b = head.v1("probe.b");
    features.dot(&w) + &b
}

fn head_accuracy(features: &Array2<f64>, labels: &[usize], head: &Params) -> f64 {
    let logits = head_logits(features, head);
    let hits = labels
        .iter()
        .enumerate()
        .filter(|(r, &l)| {
            let row = logits.slice(s![*r, ..]);
            let mut best = 0usize;
            let mut best_v = row[0];
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v > best_v {
                    best = k;
                    best_v = v;
                }
            }
            best == l
        })
        .count();
    100.0 * hits as f64 / labels.len().max(1) as f64
}

/// Trains a linear classifier on frozen position-0 features of the given
/// encoder. The encoder is never touched: a bitwise checksum before and
/// after guards that, and a violation aborts.
pub fn linear_probe(
    frozen: &Params,
    model_cfg: &ModelConfig,
    task: &TaskSpec,
    vocab: &Vocab,
    cfg: &ProbeConfig,
) -> Result<ProbeOutcome, TrainError> {
    if task.kind != TaskKind::Classification {
        return Err(TrainError::NotClassification(task.name.clone()));
    }
    if task.train_texts.is_empty() {
        return Err(TrainError::EmptyDataset(task.name.clone()));
    }
    let before = frozen.checksum();

    let train_inputs: Vec<Vec<char>> = task.train_texts.iter().map(|(t, _)| t.clone()).collect();
    let train_labels: Vec<usize> = task.train_texts.iter().map(|(_, l)| *l).collect();
    let dev_inputs: Vec<Vec<char>> = task.dev_texts.iter().map(|(t, _)| t.clone()).collect();
    let dev_labels: Vec<usize> = task.dev_texts.iter().map(|(_, l)| *l).collect();

    let train_feats = encode_features(frozen, model_cfg, &train_inputs, vocab)?;
    let dev_feats = encode_features(frozen, model_cfg, &dev_inputs, vocab)?;

    let d = model_cfg.d_model;
    let k = task.verbalizers.len();
    let mut head = Params::from_tensors(vec![
        ("probe.w".to_string(), Array2::<f64>::zeros((d, k)).into_dyn()),
        ("probe.b".to_string(), Array1::<f64>::zeros(k).into_dyn()),
    ]);
    let mut adam = AdamState::new(&head);
    let mut rng = stream_rng(cfg.seed, STREAM_PROBE);
    let n = train_inputs.len();

    for _ in 0..cfg.steps {
        let idx: Vec<usize> = (0..cfg.batch_size.min(n))
            .map(|_| rng.gen_range(0..n))
            .collect();
        let mut fb = Array2::zeros((idx.len(), d));
        for (r, &i) in idx.iter().enumerate() {
            fb.slice_mut(s![r, ..]).assign(&train_feats.slice(s![i, ..]));
        }
        let logits = head_logits(&fb, &head);
        let probs = crate::net::softmax_rows(&logits.view());
        let mut dlogits = probs;
        for (r, &i) in idx.iter().enumerate() {
            dlogits[[r, train_labels[i]]] -= 1.0;
        }
        dlogits /= idx.len() as f64;
        let dw = fb.t().dot(&dlogits);
        let db = dlogits.sum_axis(ndarray::Axis(0));
        let grads = Params::from_tensors(vec![
            ("probe.w".to_string(), dw.into_dyn()),
            ("probe.b".to_string(), db.into_dyn()),
        ]);
        adam_step(&mut head, &grads, &mut adam, &cfg.adam)?;
    }

    assert_eq!(
        before,
        frozen.checksum(),
        "frozen encoder changed during probing"
    );

    Ok(ProbeOutcome {
        train_accuracy: head_accuracy(&train_feats, &train_labels, &head),
        dev_accuracy: if dev_labels.is_empty() {
            0.0
        } else {
            head_accuracy(&dev_feats, &dev_labels, &head)
        },
        head,
    })
}
