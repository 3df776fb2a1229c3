//! Sentence-level correction metrics and N:P ratio analysis.
//!
//! A prediction "modifies" a sentence when it differs from the source
//! anywhere. Correction counts a hit only when the modified prediction
//! equals the target of an actually erroneous sentence; detection relaxes
//! that to matching the set of modified positions. The false positive rate
//! is the fraction of clean sentences that were modified at all, which is
//! what makes the negative-to-positive ratio of a corpus bite.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream_rng;
use crate::text::SentencePair;

const STREAM_NP: u64 = 0x41;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction count {preds} does not match sentence count {pairs}")]
    CountMismatch { pairs: usize, preds: usize },
    #[error("prediction {index} has length {pred} but sentence has length {pair}")]
    LengthMismatch { index: usize, pair: usize, pred: usize },
    #[error("empty evaluation set")]
    Empty,
    #[error("rate {name} = {value} is outside [0, 1]")]
    BadRate { name: &'static str, value: f64 },
    #[error("exact fix rate {exact} exceeds modify rate {modify}")]
    FixExceedsModify { exact: f64, modify: f64 },
    #[error("ratio {0} is not positive and finite")]
    BadRatio(f64),
    #[error("pool has no {0} sentences")]
    MissingClass(&'static str),
    #[error("duplicate run name {0:?}")]
    DuplicateRun(String),
    #[error("baseline {0:?} not among runs")]
    MissingBaseline(String),
    #[error("need at least two runs to compare")]
    TooFewRuns,
}

/// Character-level variants of the sentence metrics, over positions rather
/// than whole sentences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_sentences: usize,
    /// Sentences whose source differs from the target.
    pub positives: usize,
    /// Clean sentences.
    pub negatives: usize,
    pub modified: usize,
    pub modified_clean: usize,
    pub correction_tp: usize,
    pub detection_tp: usize,
    pub correction_precision: f64,
    pub correction_recall: f64,
    pub correction_f1: f64,
    pub detection_precision: f64,
    pub detection_recall: f64,
    pub detection_f1: f64,
    pub fpr: f64,
    pub sentence_accuracy: f64,
    /// Set when nothing was modified, so precision defaulted to zero.
    pub precision_flagged: bool,
    /// Set when there were no positives, so recall defaulted to zero.
    pub recall_flagged: bool,
    /// Set when there were no clean sentences, so FPR defaulted to zero.
    pub fpr_flagged: bool,
    pub char_level: CharMetrics,
}

fn ratio_or(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn diff_positions(a: &[char], b: &[char]) -> BTreeSet<usize> {
    a.iter()
        .zip(b)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| i)
        .collect()
}

/// Scores predictions against gold pairs. All rates are percentages in
/// [0, 100].
pub fn evaluate(pairs: &[SentencePair], predictions: &[Vec<char>]) -> Result<MetricsReport, EvalError> {
    if pairs.len() != predictions.len() {
        return Err(EvalError::CountMismatch {
            pairs: pairs.len(),
            preds: predictions.len(),
        });
    }
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    for (i, (pair, pred)) in pairs.iter().zip(predictions).enumerate() {
        if pair.len() != pred.len() {
            return Err(EvalError::LengthMismatch {
                index: i,
                pair: pair.len(),
                pred: pred.len(),
            });
        }
    }

    let mut positives = 0usize;
    let mut negatives = 0usize;
    let mut modified = 0usize;
    let mut modified_clean = 0usize;
    let mut correction_tp = 0usize;
    let mut detection_tp = 0usize;
    let mut exact = 0usize;

    let mut c_modified = 0usize;
    let mut c_fixed = 0usize;
    let mut c_errors = 0usize;
    let mut c_clean = 0usize;
    let mut c_false = 0usize;

    for (pair, pred) in pairs.iter().zip(predictions) {
        let erroneous = pair.has_error();
        let error_set: BTreeSet<usize> = pair.error_positions().into_iter().collect();
        let modified_set = diff_positions(pair.source(), pred);
        let is_modified = !modified_set.is_empty();

        if erroneous {
            positives += 1;
        } else {
            negatives += 1;
        }
        if is_modified {
            modified += 1;
            if !erroneous {
                modified_clean += 1;
            }
        }
        if pred == pair.target() {
            exact += 1;
            if erroneous && is_modified {
                correction_tp += 1;
            }
        }
        if erroneous && is_modified && modified_set == error_set {
            detection_tp += 1;
        }

        for (i, (&s, &p)) in pair.source().iter().zip(pred).enumerate() {
            let t = pair.target()[i];
            if s != t {
                c_errors += 1;
            } else {
                c_clean += 1;
                if p != s {
                    c_false += 1;
                }
            }
            if p != s {
                c_modified += 1;
                if p == t && s != t {
                    c_fixed += 1;
                }
            }
        }
    }

    let (cp, precision_flagged) = ratio_or(correction_tp, modified);
    let (cr, recall_flagged) = ratio_or(correction_tp, positives);
    let (dp, _) = ratio_or(detection_tp, modified);
    let (dr, _) = ratio_or(detection_tp, positives);
    let (fpr, fpr_flagged) = ratio_or(modified_clean, negatives);

    let (ccp, _) = ratio_or(c_fixed, c_modified);
    let (ccr, _) = ratio_or(c_fixed, c_errors);
    let (cfpr, _) = ratio_or(c_false, c_clean);

    Ok(MetricsReport {
        n_sentences: pairs.len(),
        positives,
        negatives,
        modified,
        modified_clean,
        correction_tp,
        detection_tp,
        correction_precision: 100.0 * cp,
        correction_recall: 100.0 * cr,
        correction_f1: 100.0 * f1_of(cp, cr),
        detection_precision: 100.0 * dp,
        detection_recall: 100.0 * dr,
        detection_f1: 100.0 * f1_of(dp, dr),
        fpr: 100.0 * fpr,
        sentence_accuracy: 100.0 * exact as f64 / pairs.len() as f64,
        precision_flagged,
        recall_flagged,
        fpr_flagged,
        char_level: CharMetrics {
            precision: 100.0 * ccp,
            recall: 100.0 * ccr,
            f1: 100.0 * f1_of(ccp, ccr),
            fpr: 100.0 * cfpr,
        },
    })
}

/// Per-sentence behavior of a corrector, summarized as three rates: how
/// often it touches an erroneous sentence, how often the touch lands
/// exactly, and how often it touches a clean sentence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NpRates {
    pub modify_rate_on_errors: f64,
    pub exact_fix_rate: f64,
    pub fpr: f64,
}

impl NpRates {
    /// Measures the three behavior rates from an evaluation report.
    pub fn from_report(report: &MetricsReport) -> NpRates {
        let p = report.positives.max(1) as f64;
        let n = report.negatives.max(1) as f64;
        NpRates {
            modify_rate_on_errors: (report.modified - report.modified_clean) as f64 / p,
            exact_fix_rate: report.correction_tp as f64 / p,
            fpr: report.modified_clean as f64 / n,
        }
    }

    fn validate(&self) -> Result<(), EvalError> {
        for (name, value) in [
            ("modify_rate_on_errors", self.modify_rate_on_errors),
            ("exact_fix_rate", self.exact_fix_rate),
            ("fpr", self.fpr),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(EvalError::BadRate { name, value });
            }
        }
        if self.exact_fix_rate > self.modify_rate_on_errors {
            return Err(EvalError::FixExceedsModify {
                exact: self.exact_fix_rate,
                modify: self.modify_rate_on_errors,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NpPoint {
    pub ratio: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Predicts precision and F1 at each clean-to-erroneous ratio from the
/// per-sentence behavior rates. With P positives the corrector fixes
/// e*P, wrongly modifies (r - e)*P, and falsely touches f*N clean
/// sentences, so 1/precision = (r + f*ratio) / e: affine in the ratio.
pub fn np_sweep(rates: &NpRates, ratios: &[f64]) -> Result<Vec<NpPoint>, EvalError> {
    rates.validate()?;
    let mut out = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(EvalError::BadRatio(ratio));
        }
        let tp = rates.exact_fix_rate;
        let touched = rates.modify_rate_on_errors + rates.fpr * ratio;
        let p = if touched == 0.0 { 0.0 } else { tp / touched };
        let r = tp;
        out.push(NpPoint {
            ratio,
            precision: 100.0 * p,
            recall: 100.0 * r,
            f1: 100.0 * f1_of(p, r),
        });
    }
    Ok(out)
}

/// Largest deviation of 1/precision from the line through the first and
/// last sweep points. Zero (to rounding) whenever every modification of an
/// erroneous sentence is an exact fix.
pub fn inverse_precision_affine_deviation(points: &[NpPoint]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let inv = |p: &NpPoint| 100.0 / p.precision;
    let first = points.first().unwrap();
    let last = points.last().unwrap();
    let slope = (inv(last) - inv(first)) / (last.ratio - first.ratio);
    points
        .iter()
        .map(|p| (inv(first) + slope * (p.ratio - first.ratio) - inv(p)).abs())
        .fold(0.0, f64::max)
}

/// Builds test sets at each ratio by resampling the pool's erroneous and
/// clean sentences with replacement, then scores them for real. Agreement
/// with `np_sweep` is the empirical check on the analytic law.
pub fn simulate_np(
    pairs: &[SentencePair],
    predictions: &[Vec<char>],
    ratios: &[f64],
    total: usize,
    seed: u64,
) -> Result<Vec<NpPoint>, EvalError> {
    if pairs.len() != predictions.len() {
        return Err(EvalError::CountMismatch {
            pairs: pairs.len(),
            preds: predictions.len(),
        });
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (pair, pred) in pairs.iter().zip(predictions) {
        if pair.has_error() {
            pos.push((pair, pred));
        } else {
            neg.push((pair, pred));
        }
    }
    if pos.is_empty() {
        return Err(EvalError::MissingClass("erroneous"));
    }
    if neg.is_empty() {
        return Err(EvalError::MissingClass("clean"));
    }

    let mut rng = stream_rng(seed, STREAM_NP);
    let mut out = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(EvalError::BadRatio(ratio));
        }
        let n_pos = ((total as f64 / (1.0 + ratio)).round() as usize).max(1);
        let n_neg = total.saturating_sub(n_pos).max(1);
        let mut sample_pairs = Vec::with_capacity(n_pos + n_neg);
        let mut sample_preds = Vec::with_capacity(n_pos + n_neg);
        for _ in 0..n_pos {
            let (pair, pred) = pos[rng.gen_range(0..pos.len())];
            sample_pairs.push(pair.clone());
            sample_preds.push(pred.clone());
        }
        for _ in 0..n_neg {
            let (pair, pred) = neg[rng.gen_range(0..neg.len())];
            sample_pairs.push(pair.clone());
            sample_preds.push(pred.clone());
        }
        let report = evaluate(&sample_pairs, &sample_preds)?;
        out.push(NpPoint {
            ratio,
            precision: report.correction_precision,
            recall: report.correction_recall,
            f1: report.correction_f1,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub name: String,
    pub correction_f1: f64,
    pub delta_f1: f64,
    pub correction_precision: f64,
    pub delta_precision: f64,
    pub correction_recall: f64,
    pub delta_recall: f64,
    pub fpr: f64,
    pub delta_fpr: f64,
}

/// Tabulates runs against a named baseline. Deltas are in percentage
/// points; the baseline row carries zero deltas.
pub fn compare_runs(
    runs: &[(String, MetricsReport)],
    baseline: &str,
) -> Result<Vec<ComparisonRow>, EvalError> {
    if runs.len() < 2 {
        return Err(EvalError::TooFewRuns);
    }
    let mut seen = BTreeSet::new();
    for (name, _) in runs {
        if !seen.insert(name.clone()) {
            return Err(EvalError::DuplicateRun(name.clone()));
        }
    }
    let base = runs
        .iter()
        .find(|(name, _)| name == baseline)
        .map(|(_, r)| r)
        .ok_or_else(|| EvalError::MissingBaseline(baseline.to_string()))?
        .clone();
    Ok(runs
        .iter()
        .map(|(name, r)| ComparisonRow {
            name: name.clone(),
            correction_f1: r.correction_f1,
            delta_f1: r.correction_f1 - base.correction_f1,
            correction_precision: r.correction_precision,
            delta_precision: r.correction_precision - base.correction_precision,
            correction_recall: r.correction_recall,
            delta_recall: r.correction_recall - base.correction_recall,
            fpr: r.fpr,
            delta_fpr: r.fpr - base.fpr,
        })
        .collect())
}
