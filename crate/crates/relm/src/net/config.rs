//! Model architecture configuration.

use serde::{Deserialize, Serialize};

use super::NetError;
use crate::template::Attention;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub dropout: f64,
    pub attention_default: Attention,
    pub tie_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 48,
            n_heads: 4,
            n_layers: 2,
            d_ff: 96,
            max_len: 48,
            vocab_size: 0,
            dropout: 0.1,
            attention_default: Attention::Bidirectional,
            tie_embeddings: true,
        }
    }
}

impl ModelConfig {
    /// Desk-scale default sized for a given vocabulary.
    pub fn small(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            ..Self::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let positive = [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(NetError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(NetError::InvalidConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NetError::InvalidConfig(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_divisibility() {
        let mut cfg = ModelConfig::small(50);
        assert!(cfg.validate().is_ok());
        cfg.d_model = 30;
        cfg.n_heads = 4;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn validates_ranges() {
        let mut cfg = ModelConfig::small(50);
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::small(0);
        cfg.vocab_size = 0;
        assert!(cfg.validate().is_err());
    }
}
