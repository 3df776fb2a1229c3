//! Templates turning sentence pairs and classification examples into encoded
//! model inputs for the three training objectives, including the
//! masked-fine-tuning source corruption policy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream_rng;
use crate::text::{SentencePair, TokenId, Vocab};
use rand::Rng;

const STREAM_MASK: u64 = 0x0D0;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("mask rate must lie in [0, 1), got {0}")]
    RateOutOfRange(f64),
    #[error("strategy {strategy:?} requires a positive rate")]
    ZeroRate { strategy: MaskStrategy },
    #[error("strategy none requires rate 0, got {0}")]
    NonZeroRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    None,
    MaskAny,
    MaskNonError,
}

/// Source-side corruption policy (masked fine-tuning). Under `MaskNonError`
/// only positions where source and target agree are eligible, so the model
/// keeps every real error visible while losing part of its copy signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskPolicy {
    pub strategy: MaskStrategy,
    pub rate: f64,
    /// Also apply loss at corrupted source positions (label = target char).
    /// Off by default; the slots already cover the whole sentence.
    #[serde(default)]
    pub loss_at_corrupted_source: bool,
}

impl MaskPolicy {
    pub fn none() -> Self {
        Self {
            strategy: MaskStrategy::None,
            rate: 0.0,
            loss_at_corrupted_source: false,
        }
    }

    pub fn mask_any(rate: f64) -> Result<Self, TemplateError> {
        Self::new(MaskStrategy::MaskAny, rate)
    }

    pub fn mask_non_error(rate: f64) -> Result<Self, TemplateError> {
        Self::new(MaskStrategy::MaskNonError, rate)
    }

    /// `MaskNonError` at the given rate, or the identity policy at rate 0.
    pub fn non_error_or_none(rate: f64) -> Result<Self, TemplateError> {
        if rate == 0.0 {
            Ok(Self::none())
        } else {
            Self::mask_non_error(rate)
        }
    }

    pub fn new(strategy: MaskStrategy, rate: f64) -> Result<Self, TemplateError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TemplateError::RateOutOfRange(rate));
        }
        match (strategy, rate == 0.0) {
            (MaskStrategy::None, false) => Err(TemplateError::NonZeroRate(rate)),
            (MaskStrategy::MaskAny | MaskStrategy::MaskNonError, true) => {
                Err(TemplateError::ZeroRate { strategy })
            }
            _ => Ok(Self {
                strategy,
                rate,
                loss_at_corrupted_source: false,
            }),
        }
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        Self::new(self.strategy, self.rate).map(|_| ())
    }
}

/// Segment id of source positions (and the separator).
pub const SEG_SOURCE: u8 = 0;
/// Segment id of target/slot positions.
pub const SEG_TARGET: u8 = 1;
/// Segment id of prompt positions.
pub const SEG_PROMPT: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attention {
    Bidirectional,
    Causal,
}

/// One model input with aligned labels. `loss_mask[t]` marks positions whose
/// logits enter the loss against `label_ids[t]`; everywhere else the label
/// is PAD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub input_ids: Vec<TokenId>,
    pub segment_ids: Vec<u8>,
    pub loss_mask: Vec<bool>,
    pub label_ids: Vec<TokenId>,
    /// Position-table row per token. Sequential in every template except the
    /// rephrasing slots, which reuse the row of the source character they
    /// restore; segment embeddings keep the two copies distinguishable.
    pub position_ids: Vec<usize>,
    pub attention: Attention,
    pub n_source: usize,
}

impl EncodedExample {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    /// Structural invariants shared by every template.
    pub fn check_invariants(&self) {
        let n = self.input_ids.len();
        assert_eq!(self.segment_ids.len(), n);
        assert_eq!(self.loss_mask.len(), n);
        assert_eq!(self.label_ids.len(), n);
        assert_eq!(self.position_ids.len(), n);
        for t in 0..n {
            if self.loss_mask[t] {
                assert_ne!(self.label_ids[t], Vocab::PAD, "loss position {t} has PAD label");
            } else {
                assert_eq!(self.label_ids[t], Vocab::PAD, "masked-out position {t} has a label");
            }
        }
    }

    /// Indices of loss positions.
    pub fn loss_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&t| self.loss_mask[t]).collect()
    }
}

/// Number of positions to mask: round-half-up on rate × count. The epsilon
/// absorbs binary representation error in decimal rates (0.3 × 5 must count
/// as 1.5, not 1.4999…).
fn mask_count(rate: f64, candidates: usize) -> usize {
    (rate * candidates as f64 + 0.5 + 1e-9).floor() as usize
}

/// Replace a policy-determined number of positions with CORRUPT, chosen
/// uniformly without replacement. `MaskNonError` never touches an error
/// position.
pub fn mask_source(
    source_ids: &[TokenId],
    error_positions: &[usize],
    policy: &MaskPolicy,
    seed: u64,
) -> Vec<TokenId> {
    debug_assert!(error_positions.iter().all(|&i| i < source_ids.len()));
    let mut out = source_ids.to_vec();
    let candidates: Vec<usize> = match policy.strategy {
        MaskStrategy::None => return out,
        MaskStrategy::MaskAny => (0..source_ids.len()).collect(),
        MaskStrategy::MaskNonError => (0..source_ids.len())
            .filter(|i| !error_positions.contains(i))
            .collect(),
    };
    let k = mask_count(policy.rate, candidates.len()).min(candidates.len());
    let mut picks = candidates;
    let mut rng = stream_rng(seed, STREAM_MASK);
    for i in 0..k {
        let j = rng.gen_range(i..picks.len());
        picks.swap(i, j);
    }
    for &p in &picks[..k] {
        out[p] = Vocab::CORRUPT;
    }
    out
}

fn corrupted_positions(original: &[TokenId], masked: &[TokenId]) -> Vec<usize> {
    original
        .iter()
        .zip(masked)
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, _)| i)
        .collect()
}

/// Mask-slot rephrasing template:
/// `[prompt]* + masked(source) + SEP + MASK×n`, loss on the n slots, labels
/// are the target characters. Slot i carries the position id of source
/// character i. Prompt ids start at the vocabulary's prompt block.
pub fn template_rephrase(
    pair: &SentencePair,
    vocab: &Vocab,
    policy: &MaskPolicy,
    prompt_len: usize,
    seed: u64,
) -> EncodedExample {
    template_rephrase_with_prompt(pair, vocab, policy, prompt_len, Vocab::PROMPT_BASE, seed)
}

/// Rephrasing template with an explicit prompt block start, for tasks that
/// own a dedicated range of prompt ids.
pub fn template_rephrase_with_prompt(
    pair: &SentencePair,
    vocab: &Vocab,
    policy: &MaskPolicy,
    prompt_len: usize,
    prompt_base: TokenId,
    seed: u64,
) -> EncodedExample {
    assert!(
        prompt_len == 0
            || (prompt_base >= Vocab::PROMPT_BASE
                && prompt_base + prompt_len <= vocab.char_base()),
        "prompt ids [{prompt_base}, {}) exceed the prompt block",
        prompt_base + prompt_len
    );
    let n = pair.len();
    let source_ids = vocab.encode_chars(pair.source());
    let masked = mask_source(&source_ids, &pair.error_positions(), policy, seed);
    let target_ids = vocab.encode_chars(pair.target());

    let len = prompt_len + 2 * n + 1;
    let mut input_ids = Vec::with_capacity(len);
    let mut segment_ids = Vec::with_capacity(len);
    input_ids.extend((0..prompt_len).map(|i| prompt_base + i));
    segment_ids.extend(std::iter::repeat(SEG_PROMPT).take(prompt_len));
    input_ids.extend_from_slice(&masked);
    segment_ids.extend(std::iter::repeat(SEG_SOURCE).take(n));
    input_ids.push(Vocab::SEP);
    segment_ids.push(SEG_SOURCE);
    input_ids.extend(std::iter::repeat(Vocab::MASK).take(n));
    segment_ids.extend(std::iter::repeat(SEG_TARGET).take(n));

    let mut loss_mask = vec![false; len];
    let mut label_ids = vec![Vocab::PAD; len];
    let slot0 = prompt_len + n + 1;
    for i in 0..n {
        loss_mask[slot0 + i] = true;
        label_ids[slot0 + i] = target_ids[i];
    }
    if policy.loss_at_corrupted_source {
        for p in corrupted_positions(&source_ids, &masked) {
            loss_mask[prompt_len + p] = true;
            label_ids[prompt_len + p] = target_ids[p];
        }
    }

    let mut position_ids = Vec::with_capacity(len);
    position_ids.extend(0..prompt_len + n + 1);
    position_ids.extend(prompt_len..prompt_len + n);

    EncodedExample {
        input_ids,
        segment_ids,
        loss_mask,
        label_ids,
        position_ids,
        attention: Attention::Bidirectional,
        n_source: n,
    }
}

/// Per-position tagging template: input is the (optionally corrupted)
/// source, labels are the target, loss everywhere.
pub fn template_tagging(
    pair: &SentencePair,
    vocab: &Vocab,
    policy: &MaskPolicy,
    seed: u64,
) -> EncodedExample {
    let n = pair.len();
    let source_ids = vocab.encode_chars(pair.source());
    let masked = mask_source(&source_ids, &pair.error_positions(), policy, seed);
    EncodedExample {
        input_ids: masked,
        segment_ids: vec![SEG_SOURCE; n],
        loss_mask: vec![true; n],
        label_ids: vocab.encode_chars(pair.target()),
        position_ids: (0..n).collect(),
        attention: Attention::Bidirectional,
        n_source: n,
    }
}

/// Autoregressive template: `source + SEP + target + EOS` under causal
/// attention. Position t is scored against the token at t+1, so the loss
/// covers predicting every target character and the final EOS.
pub fn template_autoregressive(pair: &SentencePair, vocab: &Vocab) -> EncodedExample {
    let n = pair.len();
    let len = 2 * n + 2;
    let mut input_ids = Vec::with_capacity(len);
    input_ids.extend(vocab.encode_chars(pair.source()));
    input_ids.push(Vocab::SEP);
    input_ids.extend(vocab.encode_chars(pair.target()));
    input_ids.push(Vocab::EOS);

    let mut segment_ids = vec![SEG_SOURCE; n + 1];
    segment_ids.extend(std::iter::repeat(SEG_TARGET).take(n + 1));

    let mut loss_mask = vec![false; len];
    let mut label_ids = vec![Vocab::PAD; len];
    for t in n..=2 * n {
        loss_mask[t] = true;
        label_ids[t] = input_ids[t + 1];
    }

    EncodedExample {
        input_ids,
        segment_ids,
        loss_mask,
        label_ids,
        position_ids: (0..len).collect(),
        attention: Attention::Causal,
        n_source: n,
    }
}

/// Classification-as-MLM template:
/// `[task prompt ids] + text + SEP + MASK×L`, loss on the L slots, labels
/// spell the verbalizer. `task_prompt_id` is the first prompt id owned by
/// the task.
pub fn template_classification(
    text: &[char],
    label_word: &[char],
    vocab: &Vocab,
    prompt_len: usize,
    task_prompt_id: TokenId,
) -> EncodedExample {
    assert!(!label_word.is_empty(), "label word must be nonempty");
    assert!(
        prompt_len == 0
            || (task_prompt_id >= Vocab::PROMPT_BASE
                && task_prompt_id + prompt_len <= vocab.char_base()),
        "prompt ids [{task_prompt_id}, {}) exceed the prompt block",
        task_prompt_id + prompt_len
    );
    let n = text.len();
    let l = label_word.len();
    let len = prompt_len + n + 1 + l;
    let mut input_ids = Vec::with_capacity(len);
    let mut segment_ids = Vec::with_capacity(len);
    input_ids.extend((0..prompt_len).map(|i| task_prompt_id + i));
    segment_ids.extend(std::iter::repeat(SEG_PROMPT).take(prompt_len));
    input_ids.extend(vocab.encode_chars(text));
    segment_ids.extend(std::iter::repeat(SEG_SOURCE).take(n));
    input_ids.push(Vocab::SEP);
    segment_ids.push(SEG_SOURCE);
    input_ids.extend(std::iter::repeat(Vocab::MASK).take(l));
    segment_ids.extend(std::iter::repeat(SEG_TARGET).take(l));

    let mut loss_mask = vec![false; len];
    let mut label_ids = vec![Vocab::PAD; len];
    let slot0 = prompt_len + n + 1;
    for i in 0..l {
        loss_mask[slot0 + i] = true;
        label_ids[slot0 + i] = vocab.encode_char(label_word[i]);
    }

    EncodedExample {
        input_ids,
        segment_ids,
        loss_mask,
        label_ids,
        position_ids: (0..len).collect(),
        attention: Attention::Bidirectional,
        n_source: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab() -> Vocab {
        Vocab::build(["abcdefgh"], 8).unwrap()
    }

    fn id(v: &Vocab, c: char) -> TokenId {
        v.id_of(c).unwrap()
    }

    #[test]
    fn policy_constructors_enforce_invariant() {
        assert!(MaskPolicy::new(MaskStrategy::None, 0.0).is_ok());
        assert!(MaskPolicy::new(MaskStrategy::None, 0.1).is_err());
        assert!(MaskPolicy::new(MaskStrategy::MaskAny, 0.0).is_err());
        assert!(MaskPolicy::new(MaskStrategy::MaskNonError, 1.0).is_err());
        assert!(MaskPolicy::new(MaskStrategy::MaskNonError, -0.1).is_err());
        assert_eq!(
            MaskPolicy::non_error_or_none(0.0).unwrap(),
            MaskPolicy::none()
        );
    }

    #[test]
    fn mask_non_error_counts_and_avoids_errors() {
        let v = vocab();
        let ids = v.encode("abcdefghab");
        let errors = vec![2, 5];
        let policy = MaskPolicy::mask_non_error(0.25).unwrap();
        for seed in 0..50 {
            let out = mask_source(&ids, &errors, &policy, seed);
            let corrupted: Vec<usize> = corrupted_positions(&ids, &out);
            assert_eq!(corrupted.len(), 2, "round(0.25 × 8) = 2");
            assert!(corrupted.iter().all(|p| !errors.contains(p)));
            assert!(corrupted.iter().all(|&p| out[p] == Vocab::CORRUPT));
        }
    }

    #[test]
    fn mask_rate_zero_is_identity() {
        let v = vocab();
        let ids = v.encode("abcd");
        assert_eq!(mask_source(&ids, &[1], &MaskPolicy::none(), 3), ids);
    }

    #[test]
    fn mask_any_counts() {
        let v = vocab();
        let ids = v.encode("abcdefghab");
        let policy = MaskPolicy::mask_any(0.3).unwrap();
        let out = mask_source(&ids, &[0], &policy, 9);
        assert_eq!(corrupted_positions(&ids, &out).len(), 3);
    }

    #[test]
    fn mask_count_rounds_half_up() {
        assert_eq!(mask_count(0.25, 10), 3);
        assert_eq!(mask_count(0.3, 5), 2);
        assert_eq!(mask_count(0.1, 5), 1);
        assert_eq!(mask_count(0.3, 10), 3);
        assert_eq!(mask_count(0.2, 2), 0);
        assert_eq!(mask_count(0.0, 10), 0);
    }

    #[test]
    fn rephrase_direct_construction() {
        let v = vocab();
        let pair = SentencePair::from_strs("ab", "ac").unwrap();
        let ex = template_rephrase(&pair, &v, &MaskPolicy::none(), 0, 0);
        ex.check_invariants();
        let (a, b, c) = (id(&v, 'a'), id(&v, 'b'), id(&v, 'c'));
        assert_eq!(ex.input_ids, vec![a, b, Vocab::SEP, Vocab::MASK, Vocab::MASK]);
        assert_eq!(ex.segment_ids, vec![0, 0, 0, 1, 1]);
        assert_eq!(ex.loss_mask, vec![false, false, false, true, true]);
        assert_eq!(ex.label_ids, vec![Vocab::PAD, Vocab::PAD, Vocab::PAD, a, c]);
        assert_eq!(ex.position_ids, vec![0, 1, 2, 0, 1]);
        assert_eq!(ex.attention, Attention::Bidirectional);
        assert_eq!(ex.n_source, 2);
    }

    #[test]
    fn rephrase_clean_pair_labels_source() {
        let v = vocab();
        let pair = SentencePair::from_strs("ab", "ab").unwrap();
        let ex = template_rephrase(&pair, &v, &MaskPolicy::none(), 0, 0);
        let (a, b) = (id(&v, 'a'), id(&v, 'b'));
        assert_eq!(&ex.label_ids[3..], &[a, b]);
    }

    #[test]
    fn rephrase_with_prompt_block() {
        let v = vocab();
        let pair = SentencePair::from_strs("ab", "ac").unwrap();
        let ex = template_rephrase(&pair, &v, &MaskPolicy::none(), 3, 0);
        ex.check_invariants();
        assert_eq!(ex.len(), 3 + 2 * 2 + 1);
        assert_eq!(
            &ex.input_ids[..3],
            &[Vocab::PROMPT_BASE, Vocab::PROMPT_BASE + 1, Vocab::PROMPT_BASE + 2]
        );
        assert_eq!(&ex.segment_ids[..3], &[2, 2, 2]);
        assert_eq!(ex.position_ids, vec![0, 1, 2, 3, 4, 5, 3, 4]);
    }

    #[test]
    fn rephrase_loss_at_corrupted_source_flag() {
        let v = vocab();
        let pair = SentencePair::from_strs("abcd", "abce").unwrap();
        let mut policy = MaskPolicy::mask_non_error(0.34).unwrap();
        policy.loss_at_corrupted_source = true;
        let ex = template_rephrase(&pair, &v, &policy, 0, 5);
        ex.check_invariants();
        let source_losses = ex.loss_mask[..4].iter().filter(|&&b| b).count();
        assert_eq!(source_losses, 1, "round(0.34 × 3) = 1 corrupted position");
        let p = ex.loss_mask[..4].iter().position(|&b| b).unwrap();
        assert_eq!(ex.label_ids[p], id(&v, pair.target()[p]));
    }

    #[test]
    fn tagging_direct_construction() {
        let v = vocab();
        let pair = SentencePair::from_strs("ab", "ac").unwrap();
        let ex = template_tagging(&pair, &v, &MaskPolicy::none(), 0);
        ex.check_invariants();
        let (a, b, c) = (id(&v, 'a'), id(&v, 'b'), id(&v, 'c'));
        assert_eq!(ex.input_ids, vec![a, b]);
        assert_eq!(ex.label_ids, vec![a, c]);
        assert!(ex.loss_mask.iter().all(|&x| x));
        assert_eq!(ex.len(), 2);
    }

    #[test]
    fn tagging_masked_counts() {
        let v = vocab();
        let pair = SentencePair::from_strs("abcd", "abce").unwrap();
        let policy = MaskPolicy::mask_non_error(0.5).unwrap();
        let ex = template_tagging(&pair, &v, &policy, 11);
        let corrupted: Vec<usize> = ex
            .input_ids
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == Vocab::CORRUPT)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(corrupted.len(), 2, "round(0.5 × 3) = 2");
        assert!(corrupted.iter().all(|&p| p != 3));
    }

    #[test]
    fn autoregressive_direct_construction() {
        let v = vocab();
        let pair = SentencePair::from_strs("ab", "ac").unwrap();
        let ex = template_autoregressive(&pair, &v);
        ex.check_invariants();
        let (a, b, c) = (id(&v, 'a'), id(&v, 'b'), id(&v, 'c'));
        assert_eq!(ex.input_ids, vec![a, b, Vocab::SEP, a, c, Vocab::EOS]);
        assert_eq!(ex.attention, Attention::Causal);
        assert_eq!(ex.len(), 2 * 2 + 2);
        // Predictions are scored for a, c, EOS: emitted at positions 2..=4.
        assert_eq!(ex.loss_mask, vec![false, false, true, true, true, false]);
        assert_eq!(
            ex.label_ids,
            vec![Vocab::PAD, Vocab::PAD, a, c, Vocab::EOS, Vocab::PAD]
        );
        assert!(ex.loss_mask[..2].iter().all(|&x| !x));
    }

    #[test]
    fn classification_direct_construction() {
        let v = vocab();
        let text: Vec<char> = "abc".chars().collect();
        let label: Vec<char> = "d".chars().collect();
        let ex = template_classification(&text, &label, &v, 4, Vocab::PROMPT_BASE + 2);
        ex.check_invariants();
        assert_eq!(ex.len(), 4 + 3 + 1 + 1);
        assert_eq!(
            &ex.input_ids[..4],
            &[
                Vocab::PROMPT_BASE + 2,
                Vocab::PROMPT_BASE + 3,
                Vocab::PROMPT_BASE + 4,
                Vocab::PROMPT_BASE + 5
            ]
        );
        let slots = ex.loss_positions();
        assert_eq!(slots, vec![8]);
        assert_eq!(ex.input_ids[8], Vocab::MASK);
        assert_eq!(ex.label_ids[8], id(&v, 'd'));
    }

    #[test]
    fn templates_are_deterministic() {
        let v = vocab();
        let pair = SentencePair::from_strs("abcdef", "abcdeg").unwrap();
        let policy = MaskPolicy::mask_non_error(0.3).unwrap();
        let a = template_rephrase(&pair, &v, &policy, 2, 42);
        let b = template_rephrase(&pair, &v, &policy, 2, 42);
        assert_eq!(a, b);
        let c = template_rephrase(&pair, &v, &policy, 2, 43);
        assert_ne!(a, c);
    }

    fn arb_pair() -> impl Strategy<Value = SentencePair> {
        proptest::collection::vec(
            (prop::char::range('a', 'h'), prop::char::range('a', 'h')),
            1..16,
        )
        .prop_map(|chars| {
            let source: Vec<char> = chars.iter().map(|&(s, _)| s).collect();
            let target: Vec<char> = chars.iter().map(|&(_, t)| t).collect();
            SentencePair::new(source, target).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn rephrase_length_formula(pair in arb_pair(), prompt_len in 0usize..8, seed: u64) {
            let v = vocab();
            let ex = template_rephrase(&pair, &v, &MaskPolicy::none(), prompt_len, seed);
            prop_assert_eq!(ex.len(), prompt_len + 2 * pair.len() + 1);
            ex.check_invariants();
        }

        #[test]
        fn tagging_length_formula(pair in arb_pair(), seed: u64) {
            let v = vocab();
            let ex = template_tagging(&pair, &v, &MaskPolicy::none(), seed);
            prop_assert_eq!(ex.len(), pair.len());
            ex.check_invariants();
        }

        #[test]
        fn autoregressive_length_formula(pair in arb_pair()) {
            let v = vocab();
            let ex = template_autoregressive(&pair, &v);
            prop_assert_eq!(ex.len(), 2 * pair.len() + 2);
            ex.check_invariants();
        }

        #[test]
        fn non_error_masking_never_hits_errors(pair in arb_pair(), rate in 0.05f64..0.95, seed: u64) {
            let v = vocab();
            let policy = MaskPolicy::mask_non_error(rate).unwrap();
            let ex = template_rephrase(&pair, &v, &policy, 0, seed);
            for &p in &pair.error_positions() {
                prop_assert_ne!(ex.input_ids[p], Vocab::CORRUPT);
            }
            let tagged = template_tagging(&pair, &v, &policy, seed);
            for &p in &pair.error_positions() {
                prop_assert_ne!(tagged.input_ids[p], Vocab::CORRUPT);
            }
        }

        #[test]
        fn rephrase_slots_match_target(pair in arb_pair(), seed: u64) {
            let v = vocab();
            let policy = MaskPolicy::mask_non_error(0.3).unwrap();
            let ex = template_rephrase(&pair, &v, &policy, 0, seed);
            let n = pair.len();
            let slots = ex.loss_positions();
            prop_assert_eq!(slots.len(), n);
            for (i, &t) in slots.iter().enumerate() {
                prop_assert_eq!(ex.input_ids[t], Vocab::MASK);
                prop_assert_eq!(ex.label_ids[t], v.encode_char(pair.target()[i]));
            }
        }

        #[test]
        fn rephrase_slot_positions_mirror_source(pair in arb_pair(), prompt_len in 0usize..8, seed: u64) {
            let v = vocab();
            let ex = template_rephrase(&pair, &v, &MaskPolicy::none(), prompt_len, seed);
            let n = pair.len();
            let slot0 = prompt_len + n + 1;
            for i in 0..n {
                prop_assert_eq!(ex.position_ids[slot0 + i], ex.position_ids[prompt_len + i]);
            }
            for (t, &p) in ex.position_ids[..slot0].iter().enumerate() {
                prop_assert_eq!(p, t);
            }
            prop_assert!(ex.position_ids.iter().all(|&p| p < ex.len()));
        }
    }
}
