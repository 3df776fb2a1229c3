//! Greedy correction under each trained objective.
//!
//! The argmax domain is restricted to character ids (plus EOS while the
//! autoregressive decoder is deciding when to stop), so corrected text never
//! contains specials. Unknown source characters are copied through
//! unchanged: a correction system must not destroy text it cannot read.

use ndarray::Array3;
use thiserror::Error;

use crate::net::{forward_eval, Batch, ModelConfig, NetError, Params};
use crate::template::{Attention, EncodedExample, MaskPolicy, template_rephrase_with_prompt, template_tagging};
use crate::text::{SentencePair, TokenId, Vocab};

const CHUNK: usize = 128;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("source of length {len} does not fit the model: max source length is {max}")]
    OverLength { len: usize, max: usize },
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Result of autoregressive decoding. `normalized` records whether the raw
/// decode had the wrong length and was truncated or padded back to n.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArDecode {
    pub output: Vec<char>,
    pub normalized: bool,
}

fn argmax_char(row: ndarray::ArrayView1<f64>, vocab: &Vocab) -> TokenId {
    let mut best = vocab.char_base();
    let mut best_v = row[best];
    for id in vocab.char_base() + 1..vocab.size() {
        if row[id] > best_v {
            best = id;
            best_v = row[id];
        }
    }
    best
}

/// Argmax over character ids and EOS; ties keep the lowest id, so EOS wins
/// only when strictly best.
fn argmax_char_or_eos(row: ndarray::ArrayView1<f64>, vocab: &Vocab) -> TokenId {
    let mut best = Vocab::EOS;
    let mut best_v = row[best];
    for id in vocab.char_base()..vocab.size() {
        if row[id] > best_v {
            best = id;
            best_v = row[id];
        }
    }
    best
}

fn copy_through(out: &mut [char], source: &[char], vocab: &Vocab) {
    for (o, &s) in out.iter_mut().zip(source) {
        if vocab.id_of(s).is_none() {
            *o = s;
        }
    }
}

/// Infill correction: source + separator + one mask slot per character, all
/// slots filled in a single forward pass. Output length always equals input
/// length.
pub fn relm_correct(
    params: &Params,
    cfg: &ModelConfig,
    source: &[char],
    vocab: &Vocab,
    prompt_len: usize,
) -> Result<Vec<char>, DecodeError> {
    let out = relm_correct_batch(params, cfg, &[source.to_vec()], vocab, prompt_len, Vocab::PROMPT_BASE)?;
    Ok(out.into_iter().next().unwrap())
}

pub fn relm_correct_batch(
    params: &Params,
    cfg: &ModelConfig,
    sources: &[Vec<char>],
    vocab: &Vocab,
    prompt_len: usize,
    prompt_base: TokenId,
) -> Result<Vec<Vec<char>>, DecodeError> {
    let max = (cfg.max_len.saturating_sub(1 + prompt_len)) / 2;
    let mut outputs = Vec::with_capacity(sources.len());
    for chunk in sources.chunks(CHUNK.max(1)) {
        let mut examples = Vec::with_capacity(chunk.len());
        for src in chunk {
            if src.len() > max {
                return Err(DecodeError::OverLength {
                    len: src.len(),
                    max,
                });
            }
            let pair = SentencePair::clean(src.clone());
            examples.push(template_rephrase_with_prompt(
                &pair,
                vocab,
                &MaskPolicy::none(),
                prompt_len,
                prompt_base,
                0,
            ));
        }
        let batch = Batch::from_examples(&examples, cfg)?;
        let logits = forward_eval(params, cfg, &batch)?;
        for (r, src) in chunk.iter().enumerate() {
            let n = src.len();
            let slot0 = prompt_len + n + 1;
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let id = argmax_char(logits.slice(ndarray::s![r, slot0 + i, ..]), vocab);
                out.push(vocab.char_of(id).unwrap());
            }
            copy_through(&mut out, src, vocab);
            outputs.push(out);
        }
    }
    Ok(outputs)
}

/// Per-position tagging correction: argmax over characters at every input
/// position.
pub fn tagging_correct(
    params: &Params,
    cfg: &ModelConfig,
    source: &[char],
    vocab: &Vocab,
) -> Result<Vec<char>, DecodeError> {
    let out = tagging_correct_batch(params, cfg, &[source.to_vec()], vocab)?;
    Ok(out.into_iter().next().unwrap())
}

pub fn tagging_correct_batch(
    params: &Params,
    cfg: &ModelConfig,
    sources: &[Vec<char>],
    vocab: &Vocab,
) -> Result<Vec<Vec<char>>, DecodeError> {
    let mut outputs = Vec::with_capacity(sources.len());
    for chunk in sources.chunks(CHUNK.max(1)) {
        let mut examples = Vec::with_capacity(chunk.len());
        for src in chunk {
            if src.len() > cfg.max_len {
                return Err(DecodeError::OverLength {
                    len: src.len(),
                    max: cfg.max_len,
                });
            }
            let pair = SentencePair::clean(src.clone());
            examples.push(template_tagging(&pair, vocab, &MaskPolicy::none(), 0));
        }
        let batch = Batch::from_examples(&examples, cfg)?;
        let logits = forward_eval(params, cfg, &batch)?;
        for (r, src) in chunk.iter().enumerate() {
            let mut out = Vec::with_capacity(src.len());
            for i in 0..src.len() {
                let id = argmax_char(logits.slice(ndarray::s![r, i, ..]), vocab);
                out.push(vocab.char_of(id).unwrap());
            }
            copy_through(&mut out, src, vocab);
            outputs.push(out);
        }
    }
    Ok(outputs)
}

/// Truncate or pad a raw autoregressive decode back to source length. The
/// padding copies the source's tail characters rather than inventing text.
fn normalize_ar(mut decoded: Vec<char>, source: &[char]) -> ArDecode {
    let n = source.len();
    if decoded.len() == n {
        return ArDecode {
            output: decoded,
            normalized: false,
        };
    }
    if decoded.len() > n {
        decoded.truncate(n);
    } else {
        decoded.extend_from_slice(&source[decoded.len()..]);
    }
    ArDecode {
        output: decoded,
        normalized: true,
    }
}

/// Greedy autoregressive correction: decode after `source + SEP` until EOS
/// or `n + max_extra` characters, then length-normalize to n.
pub fn ar_correct(
    params: &Params,
    cfg: &ModelConfig,
    source: &[char],
    vocab: &Vocab,
    max_extra: usize,
) -> Result<ArDecode, DecodeError> {
    let out = ar_correct_batch(params, cfg, &[source.to_vec()], vocab, max_extra)?;
    Ok(out.into_iter().next().unwrap())
}

pub fn ar_correct_batch(
    params: &Params,
    cfg: &ModelConfig,
    sources: &[Vec<char>],
    vocab: &Vocab,
    max_extra: usize,
) -> Result<Vec<ArDecode>, DecodeError> {
    let max = cfg.max_len.saturating_sub(2) / 2;
    let mut outputs = Vec::with_capacity(sources.len());
    for chunk in sources.chunks(CHUNK.max(1)) {
        outputs.extend(ar_chunk(params, cfg, chunk, vocab, max_extra, max)?);
    }
    Ok(outputs)
}

fn ar_chunk(
    params: &Params,
    cfg: &ModelConfig,
    sources: &[Vec<char>],
    vocab: &Vocab,
    max_extra: usize,
    max: usize,
) -> Result<Vec<ArDecode>, DecodeError> {
    let b = sources.len();
    let mut prefixes: Vec<Vec<TokenId>> = Vec::with_capacity(b);
    let mut segments: Vec<Vec<u8>> = Vec::with_capacity(b);
    let mut decoded: Vec<Vec<char>> = vec![Vec::new(); b];
    let mut done = vec![false; b];
    for src in sources {
        if src.len() > max {
            return Err(DecodeError::OverLength {
                len: src.len(),
                max,
            });
        }
        let mut ids = vocab.encode_chars(src);
        ids.push(Vocab::SEP);
        segments.push(vec![0; ids.len()]);
        prefixes.push(ids);
    }

    while done.iter().any(|&d| !d) {
        let examples: Vec<EncodedExample> = prefixes
            .iter()
            .zip(&segments)
            .map(|(ids, segs)| EncodedExample {
                input_ids: ids.clone(),
                segment_ids: segs.clone(),
                loss_mask: vec![false; ids.len()],
                label_ids: vec![Vocab::PAD; ids.len()],
                position_ids: (0..ids.len()).collect(),
                attention: Attention::Causal,
                n_source: 0,
            })
            .collect();
        let batch = Batch::from_examples(&examples, cfg)?;
        let logits: Array3<f64> = forward_eval(params, cfg, &batch)?;
        for r in 0..b {
            if done[r] {
                continue;
            }
            let n = sources[r].len();
            let last = prefixes[r].len() - 1;
            let next = argmax_char_or_eos(logits.slice(ndarray::s![r, last, ..]), vocab);
            let cap = (n + max_extra).min(cfg.max_len - 1 - prefixes[r].len() + decoded[r].len());
            if next == Vocab::EOS || decoded[r].len() >= cap {
                done[r] = true;
                continue;
            }
            decoded[r].push(vocab.char_of(next).unwrap());
            prefixes[r].push(next);
            segments[r].push(1);
            if decoded[r].len() >= cap || prefixes[r].len() >= cfg.max_len {
                done[r] = true;
            }
        }
    }

    Ok(sources
        .iter()
        .zip(decoded)
        .map(|(src, dec)| {
            let mut d = normalize_ar(dec, src);
            copy_through(&mut d.output, src, vocab);
            d
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_model;
    use proptest::prelude::*;

    fn vocab() -> Vocab {
        Vocab::build(["abcdefgh"], 4).unwrap()
    }

    fn cfg(vsz: usize) -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers: 1,
            d_ff: 24,
            max_len: 24,
            vocab_size: vsz,
            dropout: 0.0,
            attention_default: Attention::Bidirectional,
            tie_embeddings: true,
        }
    }

    #[test]
    fn normalize_rules() {
        let src: Vec<char> = "abcde".chars().collect();
        let exact = normalize_ar("vwxyz".chars().collect(), &src);
        assert_eq!(exact.output, "vwxyz".chars().collect::<Vec<_>>());
        assert!(!exact.normalized);

        let short = normalize_ar("vwx".chars().collect(), &src);
        assert_eq!(short.output, "vwxde".chars().collect::<Vec<_>>());
        assert!(short.normalized);

        let long = normalize_ar("vwxyz12".chars().collect(), &src);
        assert_eq!(long.output, "vwxyz".chars().collect::<Vec<_>>());
        assert!(long.normalized);
    }

    #[test]
    fn over_length_is_reported() {
        let v = vocab();
        let c = cfg(v.size());
        let p = init_model(&c, 0).unwrap();
        let long: Vec<char> = std::iter::repeat('a').take(20).collect();
        assert!(matches!(
            relm_correct(&p, &c, &long, &v, 0),
            Err(DecodeError::OverLength { .. })
        ));
        assert!(matches!(
            ar_correct(&p, &c, &long, &v, 2),
            Err(DecodeError::OverLength { .. })
        ));
    }

    #[test]
    fn unknown_chars_survive() {
        let v = vocab();
        let c = cfg(v.size());
        let p = init_model(&c, 1).unwrap();
        let src: Vec<char> = "aXbY".chars().collect();
        let out = relm_correct(&p, &c, &src, &v, 0).unwrap();
        assert_eq!(out[1], 'X');
        assert_eq!(out[3], 'Y');
        let out = tagging_correct(&p, &c, &src, &v).unwrap();
        assert_eq!(out[1], 'X');
        assert_eq!(out[3], 'Y');
    }

    #[test]
    fn batch_matches_single() {
        let v = vocab();
        let c = cfg(v.size());
        let p = init_model(&c, 2).unwrap();
        let sources: Vec<Vec<char>> = ["abc", "defgh", "ha"]
            .iter()
            .map(|s| s.chars().collect())
            .collect();
        let batched = relm_correct_batch(&p, &c, &sources, &v, 0, Vocab::PROMPT_BASE).unwrap();
        for (src, out) in sources.iter().zip(&batched) {
            let single = relm_correct(&p, &c, src, &v, 0).unwrap();
            assert_eq!(&single, out);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn outputs_are_clean_text_of_source_length(
            s in "[a-h]{1,9}",
            seed in 0u64..50,
        ) {
            let v = vocab();
            let c = cfg(v.size());
            let p = init_model(&c, seed).unwrap();
            let src: Vec<char> = s.chars().collect();
            for out in [
                relm_correct(&p, &c, &src, &v, 0).unwrap(),
                tagging_correct(&p, &c, &src, &v).unwrap(),
                ar_correct(&p, &c, &src, &v, 3).unwrap().output,
            ] {
                prop_assert_eq!(out.len(), src.len());
                for ch in &out {
                    prop_assert!(v.id_of(*ch).is_some(), "special or unknown char {:?}", ch);
                }
            }
        }

        #[test]
        fn decoding_is_deterministic(s in "[a-h]{1,8}") {
            let v = vocab();
            let c = cfg(v.size());
            let p = init_model(&c, 9).unwrap();
            let src: Vec<char> = s.chars().collect();
            prop_assert_eq!(
                relm_correct(&p, &c, &src, &v, 0).unwrap(),
                relm_correct(&p, &c, &src, &v, 0).unwrap()
            );
            prop_assert_eq!(
                ar_correct(&p, &c, &src, &v, 2).unwrap(),
                ar_correct(&p, &c, &src, &v, 2).unwrap()
            );
        }
    }
}
