//! Bit-exact checkpoint format.
//!
//! Layout: magic `RELM`, format version (u32 LE), a JSON config block
//! (model config plus prompt table specs), then named tensors, each as
//! name, dimension header, and row-major little-endian f64 data.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::ModelConfig;
use super::params::{zeros_model, Params, PromptSpec};

const MAGIC: &[u8; 4] = b"RELM";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: not a model checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("invalid config block: {0}")]
    BadConfig(String),
    #[error("tensor {name}: shape {got:?} disagrees with config-derived {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("tensor {0} does not belong to this config")]
    UnknownTensor(String),
    #[error("checkpoint has {got} tensors, config requires {expected}")]
    TensorCountMismatch { expected: usize, got: usize },
}

#[derive(Serialize, Deserialize)]
struct ConfigBlock {
    model: ModelConfig,
    prompts: Vec<PromptSpec>,
}

/// Serialize parameters and config into the checkpoint byte format.
pub fn save_params(params: &Params, cfg: &ModelConfig) -> Vec<u8> {
    let block = ConfigBlock {
        model: cfg.clone(),
        prompts: params.prompt_specs().to_vec(),
    };
    let json = serde_json::to_vec(&block).expect("config serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(params.n_tensors() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in t.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parse a checkpoint, rebuilding the exact parameter tensors the config
/// dictates. Every deviation gets its own error.
pub fn load_params(bytes: &[u8]) -> Result<(Params, ModelConfig), CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let json_len = r.u32()? as usize;
    let block: ConfigBlock = serde_json::from_slice(r.take(json_len)?)
        .map_err(|e| CheckpointError::BadConfig(e.to_string()))?;
    let mut params = zeros_model(&block.model, &block.prompts)
        .map_err(|e| CheckpointError::BadConfig(e.to_string()))?;

    let n_tensors = r.u32()? as usize;
    if n_tensors != params.n_tensors() {
        return Err(CheckpointError::TensorCountMismatch {
            expected: params.n_tensors(),
            got: n_tensors,
        });
    }
    for _ in 0..n_tensors {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|e| CheckpointError::BadConfig(e.to_string()))?;
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        if !params.contains(&name) {
            return Err(CheckpointError::UnknownTensor(name));
        }
        let expected = params.get(&name).shape().to_vec();
        if shape != expected {
            return Err(CheckpointError::ShapeMismatch {
                name,
                expected,
                got: shape,
            });
        }
        let t = params.get_mut(&name);
        for x in t.as_slice_mut().unwrap() {
            *x = r.f64()?;
        }
    }
    Ok((params, block.model))
}
