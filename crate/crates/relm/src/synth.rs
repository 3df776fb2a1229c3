//! Synthetic toy language: a first-order Markov chain over a small alphabet,
//! plus confusion-set error injection with train/test-disjoint edit pairs.
//!
//! The chain's transition rows are peaked (low temperature) so that context
//! usually determines which character belongs at a position. That is what
//! makes held-out substitutions correctable at all: a model that only
//! memorizes seen (wrong, right) pairs has nothing to go on, while a model
//! that reads the sentence can still recover the intended character.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::Rng;
use thiserror::Error;

use crate::rng::{mix, stream_rng};
use crate::text::SentencePair;

const STREAM_CORPUS: u64 = 0x0C0;
const STREAM_CONFUSION: u64 = 0x0C1;
const STREAM_SPLIT: u64 = 0x0C2;
const STREAM_INJECT: u64 = 0x0C3;

const ALPHABET_POOL: &str = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("per_char must be in [2, vocab_size), got {per_char} for vocab of {vocab_size}")]
    PerCharOutOfRange { per_char: usize, vocab_size: usize },
    #[error("holdout fraction must lie strictly between 0 and 1, got {0}")]
    FractionOutOfRange(f64),
    #[error("character '{c}' has {n} substitutes, need at least 2 to split")]
    TooFewSubstitutes { c: char, n: usize },
    #[error("alphabet pool supports at most {max} symbols, requested {requested}")]
    AlphabetTooLarge { requested: usize, max: usize },
    #[error("line {line}: {msg}")]
    ParseError { line: usize, msg: String },
}

/// Configuration for the synthetic world.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthConfig {
    /// Number of base symbols in the toy language.
    pub vocab_size: usize,
    /// Softmax temperature for transition rows; lower is more peaked.
    pub transition_temperature: f64,
    /// Inclusive (min, max) sentence length.
    pub sentence_length_range: (usize, usize),
    /// Number of sentences to generate.
    pub corpus_size: usize,
    /// Per-position substitution probability.
    pub error_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            vocab_size: 60,
            transition_temperature: 0.3,
            sentence_length_range: (5, 9),
            corpus_size: 25_000,
            error_rate: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.vocab_size < 8 {
            return Err(SynthError::InvalidConfig(format!(
                "vocab_size must be at least 8, got {}",
                self.vocab_size
            )));
        }
        if !(self.error_rate > 0.0 && self.error_rate < 1.0) {
            return Err(SynthError::InvalidConfig(format!(
                "error_rate must lie strictly between 0 and 1, got {}",
                self.error_rate
            )));
        }
        let (lo, hi) = self.sentence_length_range;
        if lo == 0 || lo > hi {
            return Err(SynthError::InvalidConfig(format!(
                "sentence_length_range must satisfy 0 < min <= max, got ({lo}, {hi})"
            )));
        }
        if !(self.transition_temperature > 0.0) {
            return Err(SynthError::InvalidConfig(format!(
                "transition_temperature must be positive, got {}",
                self.transition_temperature
            )));
        }
        Ok(())
    }
}

/// The first `n` symbols of the fixed alphabet pool.
pub fn alphabet(n: usize) -> Result<Vec<char>, SynthError> {
    let pool: Vec<char> = ALPHABET_POOL.chars().collect();
    if n > pool.len() {
        return Err(SynthError::AlphabetTooLarge {
            requested: n,
            max: pool.len(),
        });
    }
    Ok(pool[..n].to_vec())
}

/// First-order Markov chain over the alphabet, derived deterministically
/// from a seed. Row logits are standard normal scaled by 1/temperature,
/// then softmaxed.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    chars: Vec<char>,
    transitions: Array2<f64>,
    initial: Array1<f64>,
}

impl MarkovChain {
    pub fn new(vocab_size: usize, temperature: f64, seed: u64) -> Result<Self, SynthError> {
        if !(temperature > 0.0) {
            return Err(SynthError::InvalidConfig(format!(
                "transition_temperature must be positive, got {temperature}"
            )));
        }
        let chars = alphabet(vocab_size)?;
        let mut rng = stream_rng(seed, STREAM_CORPUS);
        let mut transitions = Array2::zeros((vocab_size, vocab_size));
        for mut row in transitions.rows_mut() {
            for x in row.iter_mut() {
                *x = standard_normal(&mut rng) / temperature;
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - max).exp());
            let sum: f64 = row.sum();
            row.mapv_inplace(|x| x / sum);
        }
        let initial = stationary_distribution(&transitions);
        Ok(Self {
            chars,
            transitions,
            initial,
        })
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn transition_matrix(&self) -> &Array2<f64> {
        &self.transitions
    }

    /// The chain's stationary distribution; sentences start from it.
    pub fn stationary(&self) -> &Array1<f64> {
        &self.initial
    }

    /// One sentence of the given length, driven by the supplied generator.
    pub fn sample_sentence<R: Rng>(&self, len: usize, rng: &mut R) -> Vec<char> {
        let mut out = Vec::with_capacity(len);
        let mut state = sample_categorical(self.initial.as_slice().unwrap(), rng);
        for _ in 0..len {
            out.push(self.chars[state]);
            state = sample_categorical(self.transitions.row(state).as_slice().unwrap(), rng);
        }
        out
    }
}

/// Fixed point of the row-stochastic matrix by power iteration.
pub fn stationary_distribution(transitions: &Array2<f64>) -> Array1<f64> {
    let n = transitions.nrows();
    let mut v = Array1::from_elem(n, 1.0 / n as f64);
    for _ in 0..10_000 {
        let next = v.dot(transitions);
        let delta: f64 = next
            .iter()
            .zip(v.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        v = next;
        if delta < 1e-14 {
            break;
        }
    }
    let sum = v.sum();
    v.mapv_inplace(|x| x / sum);
    v
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; u1 nudged away from zero so the log is finite.
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Generate `cfg.corpus_size` clean sentences. Each sentence's randomness
/// derives from (seed, index), so the corpus is order-independent.
pub fn gen_markov_corpus(cfg: &SynthConfig) -> Result<Vec<Vec<char>>, SynthError> {
    cfg.validate()?;
    let chain = MarkovChain::new(cfg.vocab_size, cfg.transition_temperature, cfg.seed)?;
    let (lo, hi) = cfg.sentence_length_range;
    let mut corpus = Vec::with_capacity(cfg.corpus_size);
    for i in 0..cfg.corpus_size {
        let mut rng = stream_rng(mix(cfg.seed, STREAM_CORPUS), i as u64 + 1);
        let len = rng.gen_range(lo..=hi);
        corpus.push(chain.sample_sentence(len, &mut rng));
    }
    Ok(corpus)
}

/// Per-character substitution table. `substitutes[c]` lists the characters
/// that may replace `c` on the source side; each induced directed edit pair
/// reads (wrong, right) = (substitute, key).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionSet {
    substitutes: BTreeMap<char, Vec<char>>,
}

impl ConfusionSet {
    pub fn new(substitutes: BTreeMap<char, Vec<char>>) -> Result<Self, SynthError> {
        for (&c, subs) in &substitutes {
            if subs.is_empty() {
                return Err(SynthError::InvalidConfig(format!(
                    "character '{c}' has an empty substitute list"
                )));
            }
            if subs.contains(&c) {
                return Err(SynthError::InvalidConfig(format!(
                    "character '{c}' lists itself as a substitute"
                )));
            }
            let distinct: BTreeSet<char> = subs.iter().copied().collect();
            if distinct.len() != subs.len() {
                return Err(SynthError::InvalidConfig(format!(
                    "character '{c}' has duplicate substitutes"
                )));
            }
        }
        Ok(Self { substitutes })
    }

    pub fn substitutes_of(&self, c: char) -> Option<&[char]> {
        self.substitutes.get(&c).map(|v| v.as_slice())
    }

    pub fn covers(&self, c: char) -> bool {
        self.substitutes.contains_key(&c)
    }

    pub fn entries(&self) -> impl Iterator<Item = (char, &[char])> {
        self.substitutes.iter().map(|(&c, v)| (c, v.as_slice()))
    }

    pub fn n_entries(&self) -> usize {
        self.substitutes.len()
    }

    /// All directed edit pairs (wrong, right), sorted.
    pub fn pairs(&self) -> Vec<(char, char)> {
        let mut out: Vec<(char, char)> = self
            .substitutes
            .iter()
            .flat_map(|(&right, subs)| subs.iter().map(move |&wrong| (wrong, right)))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn n_pairs(&self) -> usize {
        self.substitutes.values().map(Vec::len).sum()
    }

    /// Serialize as `char<TAB>sub1sub2...subk` lines.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (c, subs) in &self.substitutes {
            out.push(*c);
            out.push('\t');
            out.extend(subs.iter());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, subs) = line.split_once('\t').ok_or_else(|| SynthError::ParseError {
                line: line_no,
                msg: "missing TAB separator".into(),
            })?;
            let mut key_chars = key.chars();
            let c = match (key_chars.next(), key_chars.next()) {
                (Some(c), None) => c,
                _ => {
                    return Err(SynthError::ParseError {
                        line: line_no,
                        msg: format!("key must be a single character, got {key:?}"),
                    })
                }
            };
            if map.insert(c, subs.chars().collect::<Vec<char>>()).is_some() {
                return Err(SynthError::ParseError {
                    line: line_no,
                    msg: format!("duplicate entry for '{c}'"),
                });
            }
        }
        Self::new(map)
    }
}

/// Assign every character exactly `per_char` distinct substitutes drawn from
/// the rest of the alphabet.
pub fn build_confusion_set(
    vocab_chars: &[char],
    per_char: usize,
    seed: u64,
) -> Result<ConfusionSet, SynthError> {
    let n = vocab_chars.len();
    if per_char < 2 || per_char >= n {
        return Err(SynthError::PerCharOutOfRange {
            per_char,
            vocab_size: n,
        });
    }
    let mut sorted = vocab_chars.to_vec();
    sorted.sort_unstable();
    let mut rng = stream_rng(seed, STREAM_CONFUSION);
    let mut map = BTreeMap::new();
    for (i, &c) in sorted.iter().enumerate() {
        // Partial Fisher-Yates over the other n-1 characters.
        let mut others: Vec<char> = sorted
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &x)| x)
            .collect();
        for k in 0..per_char {
            let j = rng.gen_range(k..others.len());
            others.swap(k, j);
        }
        others.truncate(per_char);
        map.insert(c, others);
    }
    ConfusionSet::new(map)
}

/// Partition the directed edit pairs into disjoint train/test halves.
///
/// The test half gets round(fraction * total) pairs exactly. Each character
/// keeps at least one substitute on both sides where the budget allows;
/// characters with a single substitute stay in train.
pub fn split_confusion(
    conf: &ConfusionSet,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(ConfusionSet, ConfusionSet), SynthError> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(SynthError::FractionOutOfRange(holdout_fraction));
    }
    for (c, subs) in conf.entries() {
        if subs.len() < 2 {
            return Err(SynthError::TooFewSubstitutes { c, n: subs.len() });
        }
    }
    let total = conf.n_pairs();
    let budget = (holdout_fraction * total as f64).round() as usize;

    let chars: Vec<char> = conf.entries().map(|(c, _)| c).collect();
    let sizes: Vec<usize> = conf.entries().map(|(_, s)| s.len()).collect();
    let mut test_counts: Vec<usize> = sizes
        .iter()
        .map(|&k| ((holdout_fraction * k as f64).round() as usize).clamp(1, k - 1))
        .collect();

    // Nudge per-character counts toward the global budget, first within the
    // [1, k-1] band, then by letting characters fall out of one half.
    let mut have: usize = test_counts.iter().sum();
    let bands: [(usize, bool); 2] = [(1, true), (0, false)];
    for &(floor, banded) in &bands {
        let mut progressed = true;
        while have != budget && progressed {
            progressed = false;
            for (i, &k) in sizes.iter().enumerate() {
                if have == budget {
                    break;
                }
                let ceil = if banded { k - 1 } else { k };
                if have < budget && test_counts[i] < ceil {
                    test_counts[i] += 1;
                    have += 1;
                    progressed = true;
                } else if have > budget && test_counts[i] > floor {
                    test_counts[i] -= 1;
                    have -= 1;
                    progressed = true;
                }
            }
        }
        if have == budget {
            break;
        }
    }

    let mut rng = stream_rng(seed, STREAM_SPLIT);
    let mut train = BTreeMap::new();
    let mut test = BTreeMap::new();
    for (i, &c) in chars.iter().enumerate() {
        let mut subs = conf.substitutes_of(c).unwrap().to_vec();
        for k in 0..test_counts[i] {
            let j = rng.gen_range(k..subs.len());
            subs.swap(k, j);
        }
        let test_subs: Vec<char> = subs[..test_counts[i]].to_vec();
        let train_subs: Vec<char> = subs[test_counts[i]..].to_vec();
        if !test_subs.is_empty() {
            test.insert(c, test_subs);
        }
        if !train_subs.is_empty() {
            train.insert(c, train_subs);
        }
    }
    Ok((ConfusionSet::new(train)?, ConfusionSet::new(test)?))
}

/// Corrupt a clean sentence: each position is independently replaced with a
/// uniformly chosen substitute with probability `error_rate`. Characters the
/// confusion set does not cover are never touched.
pub fn inject_errors(
    target: &[char],
    conf: &ConfusionSet,
    error_rate: f64,
    seed: u64,
) -> SentencePair {
    let mut rng = stream_rng(seed, STREAM_INJECT);
    let mut source = target.to_vec();
    for (i, &c) in target.iter().enumerate() {
        let u: f64 = rng.gen();
        if u < error_rate {
            if let Some(subs) = conf.substitutes_of(c) {
                source[i] = subs[rng.gen_range(0..subs.len())];
            }
        }
    }
    SentencePair::new(source, target.to_vec()).expect("lengths match by construction")
}

/// Corrupt a whole corpus with per-sentence derived seeds.
pub fn inject_corpus(
    corpus: &[Vec<char>],
    conf: &ConfusionSet,
    error_rate: f64,
    seed: u64,
) -> Vec<SentencePair> {
    corpus
        .iter()
        .enumerate()
        .map(|(i, s)| inject_errors(s, conf, error_rate, mix(seed, i as u64 + 1)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            vocab_size: 12,
            corpus_size: 50,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn corpus_has_requested_shape() {
        let cfg = SynthConfig {
            corpus_size: 5,
            ..small_cfg()
        };
        let corpus = gen_markov_corpus(&cfg).unwrap();
        assert_eq!(corpus.len(), 5);
        let (lo, hi) = cfg.sentence_length_range;
        for s in &corpus {
            assert!(s.len() >= lo && s.len() <= hi);
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        let cfg = small_cfg();
        assert_eq!(gen_markov_corpus(&cfg).unwrap(), gen_markov_corpus(&cfg).unwrap());
        let other = SynthConfig {
            seed: 1,
            ..small_cfg()
        };
        assert_ne!(gen_markov_corpus(&cfg).unwrap(), gen_markov_corpus(&other).unwrap());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = small_cfg();
        cfg.vocab_size = 4;
        assert!(gen_markov_corpus(&cfg).is_err());
        let mut cfg = small_cfg();
        cfg.error_rate = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg();
        cfg.error_rate = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg();
        cfg.sentence_length_range = (6, 3);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn transition_rows_are_stochastic() {
        let chain = MarkovChain::new(12, 0.3, 9).unwrap();
        for row in chain.transition_matrix().rows() {
            let sum: f64 = row.sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn empirical_unigrams_match_stationary() {
        // Oracle: fixed point of the transition matrix, computed here by
        // plain repeated multiplication from a deliberately lopsided start.
        let cfg = SynthConfig {
            vocab_size: 12,
            corpus_size: 100_000,
            ..SynthConfig::default()
        };
        let chain = MarkovChain::new(cfg.vocab_size, cfg.transition_temperature, cfg.seed).unwrap();
        let t = chain.transition_matrix();
        let mut v = Array1::zeros(cfg.vocab_size);
        v[0] = 1.0;
        for _ in 0..500 {
            v = v.dot(t);
        }

        let corpus = gen_markov_corpus(&cfg).unwrap();
        let mut counts = vec![0usize; cfg.vocab_size];
        let mut total = 0usize;
        let chars = chain.chars();
        for s in &corpus {
            for &c in s {
                let i = chars.iter().position(|&x| x == c).unwrap();
                counts[i] += 1;
                total += 1;
            }
        }
        let tv: f64 = counts
            .iter()
            .zip(v.iter())
            .map(|(&c, &p)| (c as f64 / total as f64 - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "total variation {tv}");
    }

    #[test]
    fn confusion_set_shape_and_determinism() {
        let chars = alphabet(10).unwrap();
        let conf = build_confusion_set(&chars, 3, 5).unwrap();
        assert_eq!(conf.n_entries(), 10);
        for (c, subs) in conf.entries() {
            assert_eq!(subs.len(), 3);
            assert!(!subs.contains(&c));
            let distinct: HashSet<char> = subs.iter().copied().collect();
            assert_eq!(distinct.len(), 3);
        }
        assert_eq!(conf, build_confusion_set(&chars, 3, 5).unwrap());
        assert_ne!(conf, build_confusion_set(&chars, 3, 6).unwrap());
    }

    #[test]
    fn confusion_per_char_bounds() {
        let chars = alphabet(10).unwrap();
        assert!(build_confusion_set(&chars, 1, 0).is_err());
        assert!(build_confusion_set(&chars, 10, 0).is_err());
        assert!(build_confusion_set(&chars, 9, 0).is_ok());
    }

    #[test]
    fn confusion_file_round_trip() {
        let chars = alphabet(8).unwrap();
        let conf = build_confusion_set(&chars, 2, 3).unwrap();
        let text = conf.serialize();
        assert_eq!(ConfusionSet::parse(&text).unwrap(), conf);
    }

    #[test]
    fn confusion_parse_errors_name_lines() {
        let err = ConfusionSet::parse("a\tbc\nxy\n").unwrap_err();
        match err {
            SynthError::ParseError { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected: {other}"),
        }
        assert!(ConfusionSet::parse("a\ta\n").is_err());
        assert!(ConfusionSet::parse("a\tbb\n").is_err());
    }

    #[test]
    fn split_budget_and_partition() {
        let chars = alphabet(10).unwrap();
        let conf = build_confusion_set(&chars, 3, 7).unwrap();
        assert_eq!(conf.n_pairs(), 30);
        let (train, test) = split_confusion(&conf, 0.3, 11).unwrap();
        let test_n = test.n_pairs() as i64;
        assert!((test_n - 9).abs() <= 1, "test pairs = {test_n}");
        let train_pairs: HashSet<_> = train.pairs().into_iter().collect();
        let test_pairs: HashSet<_> = test.pairs().into_iter().collect();
        assert!(train_pairs.is_disjoint(&test_pairs));
        let mut union: Vec<_> = train_pairs.union(&test_pairs).copied().collect();
        union.sort_unstable();
        assert_eq!(union, conf.pairs());
    }

    #[test]
    fn split_half_on_two_substitutes() {
        let chars = alphabet(8).unwrap();
        let conf = build_confusion_set(&chars, 2, 7).unwrap();
        let (train, test) = split_confusion(&conf, 0.5, 3).unwrap();
        for (c, _) in conf.entries() {
            assert!(train.covers(c), "'{c}' missing from train");
            assert!(test.covers(c), "'{c}' missing from test");
        }
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let chars = alphabet(8).unwrap();
        let conf = build_confusion_set(&chars, 2, 7).unwrap();
        assert!(split_confusion(&conf, 0.0, 0).is_err());
        assert!(split_confusion(&conf, 1.0, 0).is_err());
    }

    #[test]
    fn inject_rate_zero_and_one() {
        let chars = alphabet(8).unwrap();
        let conf = build_confusion_set(&chars, 2, 1).unwrap();
        let target: Vec<char> = "abcabc".chars().collect();
        let clean = inject_errors(&target, &conf, 0.0, 4);
        assert_eq!(clean.source(), clean.target());
        assert!(clean.error_positions().is_empty());
        let dirty = inject_errors(&target, &conf, 1.0, 4);
        assert_eq!(dirty.error_positions().len(), target.len());
    }

    #[test]
    fn inject_rate_concentrates() {
        let chars = alphabet(12).unwrap();
        let conf = build_confusion_set(&chars, 3, 2).unwrap();
        let cfg = SynthConfig {
            vocab_size: 12,
            corpus_size: 20_000,
            ..SynthConfig::default()
        };
        let corpus = gen_markov_corpus(&cfg).unwrap();
        let pairs = inject_corpus(&corpus, &conf, 0.1, 99);
        let positions: usize = pairs.iter().map(SentencePair::len).sum();
        let errors: usize = pairs.iter().map(|p| p.error_positions().len()).sum();
        assert!(positions > 100_000);
        let frac = errors as f64 / positions as f64;
        assert!((0.09..=0.11).contains(&frac), "observed rate {frac}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn inject_preserves_length_and_pairs(
            len in 1usize..24,
            rate in 0.0f64..=1.0,
            seed in 0u64..1000,
        ) {
            let chars = alphabet(10).unwrap();
            let conf = build_confusion_set(&chars, 3, 5).unwrap();
            let chain = MarkovChain::new(10, 0.3, seed).unwrap();
            let mut rng = stream_rng(seed, 77);
            let target = chain.sample_sentence(len, &mut rng);
            let pair = inject_errors(&target, &conf, rate, seed);
            prop_assert_eq!(pair.len(), len);
            prop_assert_eq!(pair.target(), &target[..]);
            let legal: HashSet<(char, char)> = conf.pairs().into_iter().collect();
            for i in pair.error_positions() {
                let edge = (pair.source()[i], pair.target()[i]);
                prop_assert!(legal.contains(&edge), "illegal edit {:?}", edge);
            }
        }

        #[test]
        fn split_is_partition(
            per_char in 2usize..5,
            frac in 0.05f64..0.95,
            seed in 0u64..500,
        ) {
            let chars = alphabet(9).unwrap();
            let conf = build_confusion_set(&chars, per_char, seed).unwrap();
            let (train, test) = split_confusion(&conf, frac, seed).unwrap();
            let train_pairs: HashSet<_> = train.pairs().into_iter().collect();
            let test_pairs: HashSet<_> = test.pairs().into_iter().collect();
            prop_assert!(train_pairs.is_disjoint(&test_pairs));
            prop_assert_eq!(train_pairs.len() + test_pairs.len(), conf.n_pairs());
            let mut union: Vec<_> = train_pairs.union(&test_pairs).copied().collect();
            union.sort_unstable();
            prop_assert_eq!(union, conf.pairs());
            let budget = (frac * conf.n_pairs() as f64).round() as i64;
            prop_assert!((test.n_pairs() as i64 - budget).abs() <= 1);
        }
    }
}
