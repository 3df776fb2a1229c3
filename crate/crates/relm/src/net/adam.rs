//! Adam with global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use super::params::Params;
use super::NetError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Clip gradients so their global norm does not exceed this, if set.
    pub clip_norm: Option<f64>,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
        }
    }
}

/// First/second moment tensors aligned with the parameters, plus the step
/// counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Params,
    v: Params,
    step: u64,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected update in place. Gradients are clipped by global norm
/// before entering the moments. Non-finite gradients are an error and leave
/// everything untouched.
pub fn adam_step(
    params: &mut Params,
    grads: &Params,
    state: &mut AdamState,
    hp: &AdamHyper,
) -> Result<(), NetError> {
    if let Some(tensor) = grads.non_finite_tensor() {
        return Err(NetError::NonFiniteGradient {
            tensor: tensor.to_string(),
        });
    }
    let norm = grads.global_norm();
    let scale = match hp.clip_norm {
        Some(c) if norm > c => c / norm,
        _ => 1.0,
    };
    state.step += 1;
    let bc1 = 1.0 - hp.beta1.powi(state.step as i32);
    let bc2 = 1.0 - hp.beta2.powi(state.step as i32);

    let mut m_it = state.m.iter_mut();
    let mut v_it = state.v.iter_mut();
    for ((pname, p), (gname, g)) in params.iter_mut().zip(grads.iter()) {
        assert_eq!(pname, gname, "parameter/gradient tensors out of order");
        let (_, m) = m_it.next().expect("moment tensors aligned");
        let (_, v) = v_it.next().expect("moment tensors aligned");
        let ps = p.as_slice_mut().unwrap();
        let gs = g.as_slice().unwrap();
        let ms = m.as_slice_mut().unwrap();
        let vs = v.as_slice_mut().unwrap();
        for i in 0..ps.len() {
            let gi = gs[i] * scale;
            ms[i] = hp.beta1 * ms[i] + (1.0 - hp.beta1) * gi;
            vs[i] = hp.beta2 * vs[i] + (1.0 - hp.beta2) * gi * gi;
            let mhat = ms[i] / bc1;
            let vhat = vs[i] / bc2;
            ps[i] -= hp.lr * mhat / (vhat.sqrt() + hp.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};

    fn scalar_params(value: f64) -> Params {
        Params::from_tensors(vec![(
            "w".into(),
            ArrayD::from_shape_vec(IxDyn(&[1]), vec![value]).unwrap(),
        )])
    }

    #[test]
    fn hand_iterated_three_steps() {
        let hp = AdamHyper {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        };
        let mut p = scalar_params(1.0);
        let mut st = AdamState::new(&p);
        let grad_values = [0.5, -0.25, 0.8];
        for g in grad_values {
            let grads = scalar_params(g);
            adam_step(&mut p, &grads, &mut st, &hp).unwrap();
        }

        // Independent straight-line arithmetic.
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for (t, g) in grad_values.iter().enumerate() {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mhat = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vhat = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            w -= 0.1 * mhat / (vhat.sqrt() + 1e-8);
        }
        let got = p.get_flat(0);
        assert!((got - w).abs() < 1e-12, "{got} vs {w}");
        assert_eq!(st.step_count(), 3);
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut p = scalar_params(2.5);
        let mut st = AdamState::new(&p);
        let grads = scalar_params(0.0);
        adam_step(&mut p, &grads, &mut st, &AdamHyper::default()).unwrap();
        assert_eq!(p.get_flat(0), 2.5);
    }

    #[test]
    fn clipping_scales_the_update() {
        let two = |a: f64, b: f64| {
            Params::from_tensors(vec![(
                "w".into(),
                ArrayD::from_shape_vec(IxDyn(&[2]), vec![a, b]).unwrap(),
            )])
        };
        let hp_clipped = AdamHyper {
            clip_norm: Some(1.0),
            ..AdamHyper::default()
        };
        let hp_free = AdamHyper {
            clip_norm: None,
            ..AdamHyper::default()
        };
        // Gradient norm 5; clipping to 1 must equal feeding grads / 5.
        let mut pa = two(0.0, 0.0);
        let mut sa = AdamState::new(&pa);
        adam_step(&mut pa, &two(3.0, 4.0), &mut sa, &hp_clipped).unwrap();
        let mut pb = two(0.0, 0.0);
        let mut sb = AdamState::new(&pb);
        adam_step(&mut pb, &two(0.6, 0.8), &mut sb, &hp_free).unwrap();
        for i in 0..2 {
            assert!((pa.get_flat(i) - pb.get_flat(i)).abs() < 1e-15);
        }
        // And the clipped first-step update is smaller than the raw one.
        let mut pc = two(0.0, 0.0);
        let mut sc = AdamState::new(&pc);
        adam_step(&mut pc, &two(3.0, 4.0), &mut sc, &hp_free).unwrap();
        assert!(pa.get_flat(0).abs() < pc.get_flat(0).abs());
    }

    #[test]
    fn non_finite_gradients_error() {
        let mut p = scalar_params(1.0);
        let mut st = AdamState::new(&p);
        let err = adam_step(&mut p, &scalar_params(f64::NAN), &mut st, &AdamHyper::default())
            .unwrap_err();
        assert!(matches!(err, NetError::NonFiniteGradient { .. }));
        assert_eq!(p.get_flat(0), 1.0);
        assert_eq!(st.step_count(), 0);
    }
}
