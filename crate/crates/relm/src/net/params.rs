//! Parameter store: an ordered collection of named f64 tensors.
//!
//! One representation serves four consumers: the forward pass reads typed
//! views by name, Adam walks aligned tensor lists, the gradient checker
//! addresses single coordinates through a flat index, and the checkpoint
//! writer streams (name, shape, data) records in a fixed order.

use std::collections::HashMap;

use ndarray::{Array2, ArrayD, ArrayView1, ArrayView2, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{config::ModelConfig, NetError};
use crate::rng::stream_rng;
use crate::text::TokenId;

const STREAM_INIT: u64 = 0x11;
const STREAM_PROMPT: u64 = 0x12;

/// A task-owned range of prompt ids, embedded through a dedicated table
/// instead of the token embedding. `id_offset` is the first vocabulary id
/// the table covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub name: String,
    pub id_offset: TokenId,
    pub len: usize,
}

impl PromptSpec {
    pub fn covers(&self, id: TokenId) -> bool {
        id >= self.id_offset && id < self.id_offset + self.len
    }

    pub fn tensor_name(&self) -> String {
        format!("prompt.{}", self.name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    tensors: Vec<(String, ArrayD<f64>)>,
    index: HashMap<String, usize>,
    prompt_specs: Vec<PromptSpec>,
}

pub fn layer_name(layer: usize, part: &str) -> String {
    format!("layer.{layer}.{part}")
}

/// Per-layer tensor parts in canonical order.
pub const LAYER_PARTS: [&str; 16] = [
    "ln1.gain", "ln1.bias", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln2.gain",
    "ln2.bias", "w1", "b1", "w2", "b2",
];

impl Params {
    pub fn from_tensors(tensors: Vec<(String, ArrayD<f64>)>) -> Self {
        let index = tensors
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (n.clone(), i))
            .collect();
        Self {
            tensors,
            index,
            prompt_specs: Vec::new(),
        }
    }

    fn insert(&mut self, name: String, t: ArrayD<f64>) {
        assert!(
            !self.index.contains_key(&name),
            "duplicate tensor name {name}"
        );
        self.index.insert(name.clone(), self.tensors.len());
        self.tensors.push((name, t));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> &ArrayD<f64> {
        let i = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("no tensor named {name}"));
        &self.tensors[i].1
    }

    pub fn get_mut(&mut self, name: &str) -> &mut ArrayD<f64> {
        let i = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("no tensor named {name}"));
        &mut self.tensors[i].1
    }

    /// Matrix view of a 2-D tensor.
    pub fn m2(&self, name: &str) -> ArrayView2<'_, f64> {
        self.get(name)
            .view()
            .into_dimensionality()
            .unwrap_or_else(|_| panic!("tensor {name} is not 2-D"))
    }

    /// Vector view of a 1-D tensor.
    pub fn v1(&self, name: &str) -> ArrayView1<'_, f64> {
        self.get(name)
            .view()
            .into_dimensionality()
            .unwrap_or_else(|_| panic!("tensor {name} is not 1-D"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<f64>)> {
        self.tensors.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ArrayD<f64>)> {
        self.tensors.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn n_tensors(&self) -> usize {
        self.tensors.len()
    }

    pub fn n_params(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn prompt_specs(&self) -> &[PromptSpec] {
        &self.prompt_specs
    }

    /// The prompt spec whose id range covers `id`, if any.
    pub fn prompt_covering(&self, id: TokenId) -> Option<&PromptSpec> {
        self.prompt_specs.iter().find(|s| s.covers(id))
    }

    /// FNV-1a over tensor names and raw f64 bits. Two parameter sets get
    /// the same checksum only if they are bitwise identical, which is how
    /// callers prove an encoder stayed frozen.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for (name, t) in &self.tensors {
            eat(name.as_bytes());
            for &v in t.iter() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }

    /// Same shapes and names, all values zero. Used for gradients and
    /// optimizer moments.
    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(n, t)| (n.clone(), ArrayD::zeros(t.raw_dim())))
                .collect(),
            index: self.index.clone(),
            prompt_specs: self.prompt_specs.clone(),
        }
    }

    /// Register a fresh prompt table for a task. Its ids must stay inside
    /// the vocabulary's prompt block; the caller guarantees that.
    pub fn add_prompt_table(&mut self, spec: PromptSpec, d_model: usize, seed: u64) {
        let mut rng = stream_rng(seed, STREAM_PROMPT);
        let mut t = Array2::zeros((spec.len, d_model));
        fill_trunc_normal(t.view_mut().into_dyn(), 0.02, &mut rng);
        self.insert(spec.tensor_name(), t.into_dyn());
        self.prompt_specs.push(spec);
    }

    /// Flattened copy of every value in canonical tensor order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (_, t) in &self.tensors {
            out.extend(t.iter());
        }
        out
    }

    /// Value at a flat coordinate (canonical order).
    pub fn get_flat(&self, mut i: usize) -> f64 {
        for (_, t) in &self.tensors {
            if i < t.len() {
                return *t.as_slice().unwrap().get(i).unwrap();
            }
            i -= t.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut i: usize, value: f64) {
        for (_, t) in &mut self.tensors {
            if i < t.len() {
                t.as_slice_mut().unwrap()[i] = value;
                return;
            }
            i -= t.len();
        }
        panic!("flat index out of range");
    }

    /// Name of the tensor owning a flat coordinate.
    pub fn flat_owner(&self, mut i: usize) -> &str {
        for (n, t) in &self.tensors {
            if i < t.len() {
                return n;
            }
            i -= t.len();
        }
        panic!("flat index out of range");
    }

    /// First tensor with a non-finite value, if any.
    pub fn non_finite_tensor(&self) -> Option<&str> {
        self.tensors
            .iter()
            .find(|(_, t)| t.iter().any(|x| !x.is_finite()))
            .map(|(n, _)| n.as_str())
    }

    /// Euclidean norm over every value.
    pub fn global_norm(&self) -> f64 {
        self.tensors
            .iter()
            .map(|(_, t)| t.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

/// Standard normal via Box-Muller, truncated to ±2 std by resampling.
fn fill_trunc_normal(mut t: ndarray::ArrayViewMutD<f64>, std: f64, rng: &mut impl Rng) {
    for x in t.iter_mut() {
        loop {
            let u1: f64 = rng.gen::<f64>().max(1e-300);
            let u2: f64 = rng.gen();
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            if z.abs() <= 2.0 {
                *x = z * std;
                break;
            }
        }
    }
}

/// Zero-valued parameter skeleton with the shapes the config dictates.
pub fn zeros_model(cfg: &ModelConfig, prompt_specs: &[PromptSpec]) -> Result<Params, NetError> {
    cfg.validate()?;
    let d = cfg.d_model;
    let mut p = Params::from_tensors(Vec::new());
    let t2 = |r, c| ArrayD::<f64>::zeros(IxDyn(&[r, c]));
    let t1 = |n| ArrayD::<f64>::zeros(IxDyn(&[n]));

    p.insert("tok_emb".into(), t2(cfg.vocab_size, d));
    p.insert("pos_emb".into(), t2(cfg.max_len, d));
    p.insert("seg_emb".into(), t2(3, d));
    for l in 0..cfg.n_layers {
        for part in LAYER_PARTS {
            let shape = match part {
                "wq" | "wk" | "wv" | "wo" => t2(d, d),
                "w1" => t2(d, cfg.d_ff),
                "w2" => t2(cfg.d_ff, d),
                "b1" => t1(cfg.d_ff),
                _ => t1(d),
            };
            p.insert(layer_name(l, part), shape);
        }
    }
    p.insert("ln_f.gain".into(), t1(d));
    p.insert("ln_f.bias".into(), t1(d));
    if !cfg.tie_embeddings {
        p.insert("out.w".into(), t2(d, cfg.vocab_size));
    }
    p.insert("out.b".into(), t1(cfg.vocab_size));
    for spec in prompt_specs {
        p.insert(spec.tensor_name(), t2(spec.len, d));
        p.prompt_specs.push(spec.clone());
    }
    Ok(p)
}

/// Initialize weights: truncated normal with std 0.02, normalization gains
/// 1, biases 0. Deterministic in the seed.
pub fn init_model(cfg: &ModelConfig, seed: u64) -> Result<Params, NetError> {
    let mut p = zeros_model(cfg, &[])?;
    let mut rng = stream_rng(seed, STREAM_INIT);
    for (name, t) in p.iter_mut() {
        if name.ends_with(".gain") {
            t.fill(1.0);
        } else if name.ends_with(".bias")
            || name.ends_with(".b")
            || name.starts_with("layer.") && name.rsplit('.').next().unwrap().starts_with('b')
        {
            t.fill(0.0);
        } else {
            fill_trunc_normal(t.view_mut(), 0.02, &mut rng);
        }
    }
    Ok(p)
}
