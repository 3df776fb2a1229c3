//! Central finite-difference oracle for the analytic gradients.

use rand::seq::index::sample;

use super::batch::Batch;
use super::config::ModelConfig;
use super::forward::{backward, forward_eval, loss};
use super::params::Params;
use super::NetError;
use crate::rng::stream_rng;

const STREAM_GRADCHECK: u64 = 0x31;
/// Differences below this compare as equal. Relative error is meaningless
/// near zero, and central differences carry roundoff of roughly
/// |loss| · machine-eps / epsilon, about 1e-9 here.
const ZERO_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Largest |analytic - numeric| over the sampled coordinates.
    pub max_abs_diff: f64,
    pub n_checked: usize,
    /// Tensor owning the worst coordinate.
    pub worst: String,
}

/// Compare analytic gradients against (f(θ+ε) − f(θ−ε)) / 2ε on `n_coords`
/// randomly sampled coordinates. Dropout is off throughout. Returns the
/// worst relative error observed.
pub fn grad_check(
    params: &Params,
    cfg: &ModelConfig,
    batch: &Batch,
    epsilon: f64,
    n_coords: usize,
    seed: u64,
) -> Result<GradCheckReport, NetError> {
    let analytic = backward(params, cfg, batch)?;
    let total = params.n_params();
    let n = n_coords.min(total);
    let mut rng = stream_rng(seed, STREAM_GRADCHECK);
    let coords = sample(&mut rng, total, n);

    let mut work = params.clone();
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut worst_rel = String::new();
    let mut worst_abs = String::new();
    for idx in coords {
        let orig = work.get_flat(idx);
        work.set_flat(idx, orig + epsilon);
        let lp = loss_of(&work, cfg, batch)?;
        work.set_flat(idx, orig - epsilon);
        let lm = loss_of(&work, cfg, batch)?;
        work.set_flat(idx, orig);
        let numeric = (lp - lm) / (2.0 * epsilon);
        let exact = analytic.get_flat(idx);
        let diff = (exact - numeric).abs();
        if diff > max_abs {
            max_abs = diff;
            worst_abs = params.flat_owner(idx).to_string();
        }
        let rel = if diff < ZERO_TOL {
            0.0
        } else {
            diff / exact.abs().max(numeric.abs())
        };
        if rel > max_rel {
            max_rel = rel;
            worst_rel = params.flat_owner(idx).to_string();
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        max_abs_diff: max_abs,
        n_checked: n,
        worst: if max_rel > 0.0 { worst_rel } else { worst_abs },
    })
}

fn loss_of(params: &Params, cfg: &ModelConfig, batch: &Batch) -> Result<f64, NetError> {
    let logits = forward_eval(params, cfg, batch)?;
    loss(&logits, &batch.labels, &batch.loss_mask)
}
