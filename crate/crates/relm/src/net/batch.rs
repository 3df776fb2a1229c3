//! Padded batch assembly from encoded examples.

use ndarray::Array2;

use super::{config::ModelConfig, NetError};
use crate::template::{Attention, EncodedExample};
use crate::text::{TokenId, Vocab};

/// A batch padded to a common length with PAD, plus aligned label and mask
/// planes. All examples share one attention mode.
#[derive(Debug, Clone)]
pub struct Batch {
    pub ids: Array2<TokenId>,
    pub segments: Array2<u8>,
    pub labels: Array2<TokenId>,
    pub loss_mask: Array2<bool>,
    /// True at real (non-padding) positions.
    pub real: Array2<bool>,
    /// Position-table row per token; 0 at padding.
    pub positions: Array2<usize>,
    pub attention: Attention,
    pub lens: Vec<usize>,
}

impl Batch {
    pub fn from_examples(examples: &[EncodedExample], cfg: &ModelConfig) -> Result<Self, NetError> {
        if examples.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let attention = examples[0].attention;
        let mut t = 0;
        for (index, ex) in examples.iter().enumerate() {
            if ex.is_empty() {
                return Err(NetError::EmptyExample { index });
            }
            if ex.attention != attention {
                return Err(NetError::MixedAttention);
            }
            if ex.len() > cfg.max_len {
                return Err(NetError::OverLength {
                    len: ex.len(),
                    max_len: cfg.max_len,
                });
            }
            if let Some(&p) = ex.position_ids.iter().find(|&&p| p >= cfg.max_len) {
                return Err(NetError::PositionOutOfRange {
                    position: p,
                    max_len: cfg.max_len,
                });
            }
            t = t.max(ex.len());
        }
        let b = examples.len();
        let mut ids = Array2::from_elem((b, t), Vocab::PAD);
        let mut segments = Array2::zeros((b, t));
        let mut labels = Array2::from_elem((b, t), Vocab::PAD);
        let mut loss_mask = Array2::from_elem((b, t), false);
        let mut real = Array2::from_elem((b, t), false);
        let mut positions = Array2::zeros((b, t));
        let mut lens = Vec::with_capacity(b);
        for (i, ex) in examples.iter().enumerate() {
            lens.push(ex.len());
            for j in 0..ex.len() {
                ids[(i, j)] = ex.input_ids[j];
                segments[(i, j)] = ex.segment_ids[j];
                labels[(i, j)] = ex.label_ids[j];
                loss_mask[(i, j)] = ex.loss_mask[j];
                real[(i, j)] = true;
                positions[(i, j)] = ex.position_ids[j];
            }
        }
        Ok(Self {
            ids,
            segments,
            labels,
            loss_mask,
            real,
            positions,
            attention,
            lens,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.ids.nrows()
    }

    pub fn seq_len(&self) -> usize {
        self.ids.ncols()
    }

    pub fn n_loss_positions(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::{template_autoregressive, template_rephrase, MaskPolicy};
    use crate::text::SentencePair;

    fn vocab() -> Vocab {
        Vocab::build(["abcdefgh"], 4).unwrap()
    }

    fn cfg() -> ModelConfig {
        ModelConfig::small(vocab().size())
    }

    #[test]
    fn pads_to_longest() {
        let v = vocab();
        let a = template_rephrase(
            &SentencePair::from_strs("ab", "ab").unwrap(),
            &v,
            &MaskPolicy::none(),
            0,
            0,
        );
        let b = template_rephrase(
            &SentencePair::from_strs("abcd", "abcd").unwrap(),
            &v,
            &MaskPolicy::none(),
            0,
            0,
        );
        let batch = Batch::from_examples(&[a, b], &cfg()).unwrap();
        assert_eq!(batch.batch_size(), 2);
        assert_eq!(batch.seq_len(), 9);
        assert_eq!(batch.lens, vec![5, 9]);
        assert_eq!(batch.ids[(0, 5)], Vocab::PAD);
        assert!(!batch.real[(0, 5)]);
        assert!(batch.real[(1, 8)]);
        assert_eq!(batch.n_loss_positions(), 2 + 4);
    }

    #[test]
    fn rejects_mixed_attention() {
        let v = vocab();
        let pair = SentencePair::from_strs("ab", "ab").unwrap();
        let a = template_rephrase(&pair, &v, &MaskPolicy::none(), 0, 0);
        let b = template_autoregressive(&pair, &v);
        assert!(matches!(
            Batch::from_examples(&[a, b], &cfg()),
            Err(NetError::MixedAttention)
        ));
    }

    #[test]
    fn rejects_over_length() {
        let v = vocab();
        let long: String = std::iter::repeat('a').take(40).collect();
        let pair = SentencePair::from_strs(&long, &long).unwrap();
        let ex = template_rephrase(&pair, &v, &MaskPolicy::none(), 0, 0);
        assert!(matches!(
            Batch::from_examples(&[ex], &cfg()),
            Err(NetError::OverLength { len: 81, .. })
        ));
    }

    #[test]
    fn rejects_empty() {
        assert!(matches!(
            Batch::from_examples(&[], &cfg()),
            Err(NetError::EmptyBatch)
        ));
    }
}
