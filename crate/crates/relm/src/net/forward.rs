//! Forward pass, cross-entropy loss, and manual backpropagation.
//!
//! Pre-norm transformer blocks with learned position and segment
//! embeddings. The forward pass records a tape of intermediates; backward
//! replays it in reverse. GELU uses the tanh approximation so every
//! activation is smooth, which the finite-difference oracle depends on.

use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::batch::Batch;
use super::config::ModelConfig;
use super::params::{layer_name, Params};
use super::NetError;
use crate::rng::stream_rng;
use crate::template::Attention;
use crate::text::TokenId;

const STREAM_DROPOUT: u64 = 0x21;
const NEG_INF: f64 = -1e30;
const LN_EPS: f64 = 1e-5;

fn view2(x: &Array3<f64>) -> ArrayView2<'_, f64> {
    let (b, t, d) = x.dim();
    ArrayView2::from_shape((b * t, d), x.as_slice().unwrap()).unwrap()
}

fn into3(x: Array2<f64>, b: usize, t: usize) -> Array3<f64> {
    let d = x.ncols();
    let (vec, _) = x.into_raw_vec_and_offset();
    Array3::from_shape_vec((b, t, d), vec).unwrap()
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    const K: f64 = 0.044715;
    0.5 * x * (1.0 + (C * (x + K * x * x * x)).tanh())
}

fn gelu_prime(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    const K: f64 = 0.044715;
    let u = C * (x + K * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * K * x * x)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

fn layer_norm(
    x: &Array3<f64>,
    g: ArrayView1<f64>,
    b: ArrayView1<f64>,
) -> (Array3<f64>, Array3<f64>, Array2<f64>) {
    let (bs, t, d) = x.dim();
    let mut out = Array3::zeros((bs, t, d));
    let mut xhat = Array3::zeros((bs, t, d));
    let mut rstd = Array2::zeros((bs, t));
    for bi in 0..bs {
        for ti in 0..t {
            let row = x.slice(s![bi, ti, ..]);
            let mean = row.sum() / d as f64;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let r = 1.0 / (var + LN_EPS).sqrt();
            rstd[(bi, ti)] = r;
            for di in 0..d {
                let xh = (row[di] - mean) * r;
                xhat[(bi, ti, di)] = xh;
                out[(bi, ti, di)] = g[di] * xh + b[di];
            }
        }
    }
    (out, xhat, rstd)
}

fn layer_norm_backward(
    dout: &Array3<f64>,
    xhat: &Array3<f64>,
    rstd: &Array2<f64>,
    g: ArrayView1<f64>,
) -> (Array3<f64>, Array1<f64>, Array1<f64>) {
    let (bs, t, d) = dout.dim();
    let mut dx = Array3::zeros((bs, t, d));
    let mut dg = Array1::zeros(d);
    let mut db = Array1::zeros(d);
    for bi in 0..bs {
        for ti in 0..t {
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for di in 0..d {
                let dy = dout[(bi, ti, di)];
                let xh = xhat[(bi, ti, di)];
                dg[di] += dy * xh;
                db[di] += dy;
                let dxh = dy * g[di];
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * xh;
            }
            let r = rstd[(bi, ti)];
            let inv_d = 1.0 / d as f64;
            for di in 0..d {
                let dxh = dout[(bi, ti, di)] * g[di];
                dx[(bi, ti, di)] = r
                    * (dxh - inv_d * sum_dxhat - xhat[(bi, ti, di)] * inv_d * sum_dxhat_xhat);
            }
        }
    }
    (dx, dg, db)
}

fn linear(x: &Array3<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array3<f64> {
    let (bs, t, _) = x.dim();
    let y = view2(x).dot(&w) + &b;
    into3(y, bs, t)
}

/// Returns (dx, dw, db) for y = x·w + b.
fn linear_backward(
    x: &Array3<f64>,
    dy: &Array3<f64>,
    w: ArrayView2<f64>,
) -> (Array3<f64>, Array2<f64>, Array1<f64>) {
    let (bs, t, _) = x.dim();
    let dy2 = view2(dy);
    let x2 = view2(x);
    let dx = into3(dy2.dot(&w.t()), bs, t);
    let dw = x2.t().dot(&dy2);
    let db = dy2.sum_axis(Axis(0));
    (dx, dw, db)
}

fn head_slice(x: &Array3<f64>, bi: usize, hi: usize, dh: usize) -> Array2<f64> {
    x.slice(s![bi, .., hi * dh..(hi + 1) * dh]).to_owned()
}

struct LayerTape {
    xhat1: Array3<f64>,
    rstd1: Array2<f64>,
    a: Array3<f64>,
    q: Array3<f64>,
    k: Array3<f64>,
    v: Array3<f64>,
    p: Array4<f64>,
    maskp: Option<Array4<f64>>,
    ctx: Array3<f64>,
    masko: Option<Array3<f64>>,
    xhat2: Array3<f64>,
    rstd2: Array2<f64>,
    a2: Array3<f64>,
    z: Array3<f64>,
    gz: Array3<f64>,
    maskf: Option<Array3<f64>>,
}

pub struct Tape {
    mask0: Option<Array3<f64>>,
    layers: Vec<LayerTape>,
    xhatf: Array3<f64>,
    rstdf: Array2<f64>,
    af: Array3<f64>,
}

struct DropoutSampler {
    rng: Option<rand_chacha::ChaCha8Rng>,
    keep: f64,
}

impl DropoutSampler {
    fn new(cfg: &ModelConfig, seed: Option<u64>) -> Self {
        let active = seed.is_some() && cfg.dropout > 0.0;
        Self {
            rng: active.then(|| stream_rng(seed.unwrap(), STREAM_DROPOUT)),
            keep: 1.0 - cfg.dropout,
        }
    }

    fn mask3(&mut self, dims: (usize, usize, usize)) -> Option<Array3<f64>> {
        let rng = self.rng.as_mut()?;
        let keep = self.keep;
        Some(Array3::from_shape_simple_fn(dims, || {
            if rng.gen::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        }))
    }

    fn mask4(&mut self, dims: (usize, usize, usize, usize)) -> Option<Array4<f64>> {
        let rng = self.rng.as_mut()?;
        let keep = self.keep;
        Some(Array4::from_shape_simple_fn(dims, || {
            if rng.gen::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        }))
    }
}

fn apply3(x: &mut Array3<f64>, m: &Option<Array3<f64>>) {
    if let Some(m) = m {
        *x *= m;
    }
}

fn embed(params: &Params, batch: &Batch, d: usize) -> Array3<f64> {
    let (b, t) = batch.ids.dim();
    let tok = params.m2("tok_emb");
    let pos = params.m2("pos_emb");
    let seg = params.m2("seg_emb");
    let mut x = Array3::zeros((b, t, d));
    for bi in 0..b {
        for ti in 0..t {
            let id = batch.ids[(bi, ti)];
            let row = match params.prompt_covering(id) {
                Some(spec) => {
                    let table = params.m2(&spec.tensor_name());
                    table.row(id - spec.id_offset).to_owned()
                }
                None => tok.row(id).to_owned(),
            };
            let sg = seg.row(batch.segments[(bi, ti)] as usize);
            let ps = pos.row(batch.positions[(bi, ti)]);
            for di in 0..d {
                x[(bi, ti, di)] = row[di] + ps[di] + sg[di];
            }
        }
    }
    x
}

fn forward_core(
    params: &Params,
    cfg: &ModelConfig,
    batch: &Batch,
    dropout_seed: Option<u64>,
) -> Result<(Array3<f64>, Tape), NetError> {
    cfg.validate()?;
    let (b, t) = batch.ids.dim();
    let (d, h, dh) = (cfg.d_model, cfg.n_heads, cfg.head_dim());
    let inv = 1.0 / (dh as f64).sqrt();
    let causal = batch.attention == Attention::Causal;
    let mut drop = DropoutSampler::new(cfg, dropout_seed);

    let mut x = embed(params, batch, d);
    let mask0 = drop.mask3((b, t, d));
    apply3(&mut x, &mask0);

    let mut layers = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let name = |part: &str| layer_name(l, part);
        let (a, xhat1, rstd1) = layer_norm(&x, params.v1(&name("ln1.gain")), params.v1(&name("ln1.bias")));
        let q = linear(&a, params.m2(&name("wq")), params.v1(&name("bq")));
        let k = linear(&a, params.m2(&name("wk")), params.v1(&name("bk")));
        let v = linear(&a, params.m2(&name("wv")), params.v1(&name("bv")));

        let maskp = drop.mask4((b, h, t, t));
        let mut p = Array4::zeros((b, h, t, t));
        let mut ctx = Array3::zeros((b, t, d));
        for bi in 0..b {
            for hi in 0..h {
                let qs = head_slice(&q, bi, hi, dh);
                let ks = head_slice(&k, bi, hi, dh);
                let vs = head_slice(&v, bi, hi, dh);
                let mut sc = qs.dot(&ks.t());
                sc *= inv;
                for i in 0..t {
                    for j in 0..t {
                        let allowed = batch.real[(bi, j)] && (!causal || j <= i);
                        if !allowed {
                            sc[(i, j)] += NEG_INF;
                        }
                    }
                }
                let probs = softmax_rows(&sc.view());
                let mut pd = probs.clone();
                if let Some(m) = &maskp {
                    pd *= &m.slice(s![bi, hi, .., ..]);
                }
                let c = pd.dot(&vs);
                ctx.slice_mut(s![bi, .., hi * dh..(hi + 1) * dh]).assign(&c);
                p.slice_mut(s![bi, hi, .., ..]).assign(&probs);
            }
        }

        let mut o = linear(&ctx, params.m2(&name("wo")), params.v1(&name("bo")));
        let masko = drop.mask3((b, t, d));
        apply3(&mut o, &masko);
        let y = &x + &o;

        let (a2, xhat2, rstd2) =
            layer_norm(&y, params.v1(&name("ln2.gain")), params.v1(&name("ln2.bias")));
        let z = linear(&a2, params.m2(&name("w1")), params.v1(&name("b1")));
        let gz = z.mapv(gelu);
        let mut f = linear(&gz, params.m2(&name("w2")), params.v1(&name("b2")));
        let maskf = drop.mask3((b, t, d));
        apply3(&mut f, &maskf);
        let x_next = &y + &f;

        layers.push(LayerTape {
            xhat1,
            rstd1,
            a,
            q,
            k,
            v,
            p,
            maskp,
            ctx,
            masko,
            xhat2,
            rstd2,
            a2,
            z,
            gz,
            maskf,
        });
        x = x_next;
    }

    let (af, xhatf, rstdf) = layer_norm(&x, params.v1("ln_f.gain"), params.v1("ln_f.bias"));
    let logits2 = if cfg.tie_embeddings {
        view2(&af).dot(&params.m2("tok_emb").t()) + &params.v1("out.b")
    } else {
        view2(&af).dot(&params.m2("out.w")) + &params.v1("out.b")
    };
    let logits = into3(logits2, b, t);

    Ok((
        logits,
        Tape {
            mask0,
            layers,
            xhatf,
            rstdf,
            af,
        },
    ))
}

/// Deterministic forward pass with dropout disabled.
pub fn forward_eval(
    params: &Params,
    cfg: &ModelConfig,
    batch: &Batch,
) -> Result<Array3<f64>, NetError> {
    forward_core(params, cfg, batch, None).map(|(logits, _)| logits)
}

/// Final hidden states after the last layer norm, dropout disabled. Probes
/// read representations here instead of logits.
pub fn forward_hidden(
    params: &Params,
    cfg: &ModelConfig,
    batch: &Batch,
) -> Result<Array3<f64>, NetError> {
    forward_core(params, cfg, batch, None).map(|(_, tape)| tape.af)
}

/// Forward pass with dropout driven by the given seed, returning the tape
/// needed for backpropagation.
pub fn forward_train(
    params: &Params,
    cfg: &ModelConfig,
    batch: &Batch,
    dropout_seed: u64,
) -> Result<(Array3<f64>, Tape), NetError> {
    forward_core(params, cfg, batch, Some(dropout_seed))
}

/// Mean token-level cross-entropy (natural log) over loss positions.
pub fn loss(
    logits: &Array3<f64>,
    labels: &Array2<TokenId>,
    loss_mask: &Array2<bool>,
) -> Result<f64, NetError> {
    let (b, t, _) = logits.dim();
    assert_eq!(labels.dim(), (b, t), "labels misaligned with logits");
    assert_eq!(loss_mask.dim(), (b, t), "loss mask misaligned with logits");
    let mut total = 0.0;
    let mut count = 0usize;
    for bi in 0..b {
        for ti in 0..t {
            if !loss_mask[(bi, ti)] {
                continue;
            }
            let row = logits.slice(s![bi, ti, ..]);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[labels[(bi, ti)]];
            count += 1;
        }
    }
    if count == 0 {
        return Err(NetError::NoLossPositions);
    }
    Ok(total / count as f64)
}

fn dlogits_for(
    logits: &Array3<f64>,
    labels: &Array2<TokenId>,
    loss_mask: &Array2<bool>,
) -> Result<Array3<f64>, NetError> {
    let (b, t, vsz) = logits.dim();
    let count = loss_mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(NetError::NoLossPositions);
    }
    let scale = 1.0 / count as f64;
    let mut dl = Array3::zeros((b, t, vsz));
    for bi in 0..b {
        for ti in 0..t {
            if !loss_mask[(bi, ti)] {
                continue;
            }
            let row = logits.slice(s![bi, ti, ..]);
            let sm = softmax_rows(&row.insert_axis(Axis(0)));
            for c in 0..vsz {
                dl[(bi, ti, c)] = sm[(0, c)] * scale;
            }
            dl[(bi, ti, labels[(bi, ti)])] -= scale;
        }
    }
    Ok(dl)
}

/// Loss and the gradient of every tensor in `params`. Tensors the batch
/// never touches (other tasks' prompt tables) get exact zeros.
pub fn loss_and_grads(
    params: &Params,
    cfg: &ModelConfig,
    batch: &Batch,
    dropout_seed: Option<u64>,
) -> Result<(f64, Params), NetError> {
    let (logits, tape) = forward_core(params, cfg, batch, dropout_seed)?;
    let loss_value = loss(&logits, &batch.labels, &batch.loss_mask)?;
    let mut grads = params.zeros_like();

    let (b, t) = batch.ids.dim();
    let (d, h, dh) = (cfg.d_model, cfg.n_heads, cfg.head_dim());
    let inv = 1.0 / (dh as f64).sqrt();

    let dl = dlogits_for(&logits, &batch.labels, &batch.loss_mask)?;
    let dl2 = view2(&dl);
    let af2 = view2(&tape.af);

    // Output head.
    let daf2 = if cfg.tie_embeddings {
        let tok = params.m2("tok_emb");
        *grads.get_mut("tok_emb") += &dl2.t().dot(&af2).into_dyn();
        dl2.dot(&tok)
    } else {
        let w = params.m2("out.w");
        *grads.get_mut("out.w") += &af2.t().dot(&dl2).into_dyn();
        dl2.dot(&w.t())
    };
    *grads.get_mut("out.b") += &dl2.sum_axis(Axis(0)).into_dyn();
    let daf = into3(daf2, b, t);

    let (mut dx, dgf, dbf) =
        layer_norm_backward(&daf, &tape.xhatf, &tape.rstdf, params.v1("ln_f.gain"));
    *grads.get_mut("ln_f.gain") += &dgf.into_dyn();
    *grads.get_mut("ln_f.bias") += &dbf.into_dyn();

    for l in (0..cfg.n_layers).rev() {
        let name = |part: &str| layer_name(l, part);
        let lt = &tape.layers[l];

        // FFN sublayer: x_next = y + dropout(gz·W2 + b2).
        let mut df = dx.clone();
        apply3(&mut df, &lt.maskf);
        let (dgz, dw2, db2) = linear_backward(&lt.gz, &df, params.m2(&name("w2")));
        *grads.get_mut(&name("w2")) += &dw2.into_dyn();
        *grads.get_mut(&name("b2")) += &db2.into_dyn();
        let mut dz = dgz;
        ndarray::Zip::from(&mut dz).and(&lt.z).for_each(|g, &zv| *g *= gelu_prime(zv));
        let (da2, dw1, db1) = linear_backward(&lt.a2, &dz, params.m2(&name("w1")));
        *grads.get_mut(&name("w1")) += &dw1.into_dyn();
        *grads.get_mut(&name("b1")) += &db1.into_dyn();
        let (dy_ln, dg2, db2g) =
            layer_norm_backward(&da2, &lt.xhat2, &lt.rstd2, params.v1(&name("ln2.gain")));
        *grads.get_mut(&name("ln2.gain")) += &dg2.into_dyn();
        *grads.get_mut(&name("ln2.bias")) += &db2g.into_dyn();
        let dy = &dx + &dy_ln;

        // Attention sublayer: y = x + dropout(ctx·Wo + bo).
        let mut do_ = dy.clone();
        apply3(&mut do_, &lt.masko);
        let (dctx, dwo, dbo) = linear_backward(&lt.ctx, &do_, params.m2(&name("wo")));
        *grads.get_mut(&name("wo")) += &dwo.into_dyn();
        *grads.get_mut(&name("bo")) += &dbo.into_dyn();

        let mut dq = Array3::zeros((b, t, d));
        let mut dk = Array3::zeros((b, t, d));
        let mut dv = Array3::zeros((b, t, d));
        for bi in 0..b {
            for hi in 0..h {
                let qs = head_slice(&lt.q, bi, hi, dh);
                let ks = head_slice(&lt.k, bi, hi, dh);
                let dctx_h = head_slice(&dctx, bi, hi, dh);
                let probs = lt.p.slice(s![bi, hi, .., ..]);
                let mut pd = probs.to_owned();
                if let Some(m) = &lt.maskp {
                    pd *= &m.slice(s![bi, hi, .., ..]);
                }
                let mut dpd = dctx_h.dot(&head_slice(&lt.v, bi, hi, dh).t());
                let dvs = pd.t().dot(&dctx_h);
                if let Some(m) = &lt.maskp {
                    dpd *= &m.slice(s![bi, hi, .., ..]);
                }
                // Softmax backward, scale folded in.
                let mut ds = Array2::zeros((t, t));
                for i in 0..t {
                    let dot: f64 = (0..t).map(|j| probs[(i, j)] * dpd[(i, j)]).sum();
                    for j in 0..t {
                        ds[(i, j)] = probs[(i, j)] * (dpd[(i, j)] - dot) * inv;
                    }
                }
                let dqs = ds.dot(&ks);
                let dks = ds.t().dot(&qs);
                dq.slice_mut(s![bi, .., hi * dh..(hi + 1) * dh]).assign(&dqs);
                dk.slice_mut(s![bi, .., hi * dh..(hi + 1) * dh]).assign(&dks);
                dv.slice_mut(s![bi, .., hi * dh..(hi + 1) * dh]).assign(&dvs);
            }
        }

        let (da_q, dwq, dbq) = linear_backward(&lt.a, &dq, params.m2(&name("wq")));
        let (da_k, dwk, dbk) = linear_backward(&lt.a, &dk, params.m2(&name("wk")));
        let (da_v, dwv, dbv) = linear_backward(&lt.a, &dv, params.m2(&name("wv")));
        *grads.get_mut(&name("wq")) += &dwq.into_dyn();
        *grads.get_mut(&name("bq")) += &dbq.into_dyn();
        *grads.get_mut(&name("wk")) += &dwk.into_dyn();
        *grads.get_mut(&name("bk")) += &dbk.into_dyn();
        *grads.get_mut(&name("wv")) += &dwv.into_dyn();
        *grads.get_mut(&name("bv")) += &dbv.into_dyn();
        let da = da_q + da_k + da_v;
        let (dx_ln, dg1, db1g) =
            layer_norm_backward(&da, &lt.xhat1, &lt.rstd1, params.v1(&name("ln1.gain")));
        *grads.get_mut(&name("ln1.gain")) += &dg1.into_dyn();
        *grads.get_mut(&name("ln1.bias")) += &db1g.into_dyn();
        dx = &dy + &dx_ln;
    }

    // Embedding backward.
    apply3(&mut dx, &tape.mask0);
    for bi in 0..b {
        for ti in 0..t {
            let id = batch.ids[(bi, ti)];
            let g = dx.slice(s![bi, ti, ..]);
            match params.prompt_covering(id).cloned() {
                Some(spec) => {
                    let table = grads.get_mut(&spec.tensor_name());
                    let mut row = table.slice_mut(s![id - spec.id_offset, ..]);
                    row += &g;
                }
                None => {
                    let mut row = grads.get_mut("tok_emb").slice_mut(s![id, ..]);
                    row += &g;
                }
            }
            let mut prow = grads
                .get_mut("pos_emb")
                .slice_mut(s![batch.positions[(bi, ti)], ..]);
            prow += &g;
            let mut srow = grads
                .get_mut("seg_emb")
                .slice_mut(s![batch.segments[(bi, ti)] as usize, ..]);
            srow += &g;
        }
    }

    Ok((loss_value, grads))
}

/// Eval-mode gradients (dropout off); deterministic.
pub fn backward(params: &Params, cfg: &ModelConfig, batch: &Batch) -> Result<Params, NetError> {
    loss_and_grads(params, cfg, batch, None).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::batch::Batch;
    use crate::net::params::{init_model, PromptSpec};
    use crate::template::{
        template_autoregressive, template_rephrase, EncodedExample, MaskPolicy,
    };
    use crate::text::{SentencePair, Vocab};

    fn vocab() -> Vocab {
        Vocab::build(["abcdefgh"], 4).unwrap()
    }

    fn cfg(vsz: usize) -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers: 2,
            d_ff: 24,
            max_len: 32,
            vocab_size: vsz,
            dropout: 0.1,
            attention_default: Attention::Bidirectional,
            tie_embeddings: true,
        }
    }

    fn raw_example(ids: Vec<usize>, attention: Attention) -> EncodedExample {
        let n = ids.len();
        EncodedExample {
            input_ids: ids,
            segment_ids: vec![0; n],
            loss_mask: vec![false; n],
            label_ids: vec![Vocab::PAD; n],
            attention,
            n_source: n,
        }
    }

    #[test]
    fn logits_shape() {
        let c = ModelConfig {
            vocab_size: 100,
            ..cfg(100)
        };
        let p = init_model(&c, 0).unwrap();
        let exs = vec![
            raw_example(vec![1, 2, 3, 4, 5, 6, 7], Attention::Bidirectional),
            raw_example(vec![7, 6, 5, 4, 3, 2, 1], Attention::Bidirectional),
        ];
        let batch = Batch::from_examples(&exs, &c).unwrap();
        let logits = forward_eval(&p, &c, &batch).unwrap();
        assert_eq!(logits.dim(), (2, 7, 100));
    }

    #[test]
    fn causal_prefix_invariance() {
        let v = vocab();
        let c = cfg(v.size());
        let p = init_model(&c, 1).unwrap();
        let base_ids = v.encode("abcdefg");
        let mut pert_ids = base_ids.clone();
        let j = 4;
        pert_ids[j] = v.encode_char('h');
        let a = Batch::from_examples(&[raw_example(base_ids, Attention::Causal)], &c).unwrap();
        let b = Batch::from_examples(&[raw_example(pert_ids, Attention::Causal)], &c).unwrap();
        let la = forward_eval(&p, &c, &a).unwrap();
        let lb = forward_eval(&p, &c, &b).unwrap();
        for ti in 0..j {
            for vi in 0..c.vocab_size {
                assert_eq!(la[(0, ti, vi)], lb[(0, ti, vi)], "position {ti} changed");
            }
        }
        let changed = (j..7).any(|ti| (0..c.vocab_size).any(|vi| la[(0, ti, vi)] != lb[(0, ti, vi)]));
        assert!(changed, "perturbation had no effect at or after position {j}");
    }

    #[test]
    fn padding_does_not_leak() {
        let v = vocab();
        let c = cfg(v.size());
        let p = init_model(&c, 2).unwrap();
        let short = raw_example(v.encode("abc"), Attention::Bidirectional);
        let long = raw_example(v.encode("abcdefgh"), Attention::Bidirectional);
        let alone = Batch::from_examples(&[short.clone()], &c).unwrap();
        let padded = Batch::from_examples(&[short, long], &c).unwrap();
        let la = forward_eval(&p, &c, &alone).unwrap();
        let lp = forward_eval(&p, &c, &padded).unwrap();
        for ti in 0..3 {
            for vi in 0..c.vocab_size {
                let diff = (la[(0, ti, vi)] - lp[(0, ti, vi)]).abs();
                assert!(diff < 1e-9, "padding leaked at ({ti},{vi}): {diff}");
            }
        }
    }

    #[test]
    fn eval_forward_is_pure() {
        let v = vocab();
        let c = cfg(v.size());
        let p = init_model(&c, 3).unwrap();
        let pair = SentencePair::from_strs("abcd", "abce").unwrap();
        let ex = template_rephrase(&pair, &v, &MaskPolicy::none(), 0, 0);
        let batch = Batch::from_examples(&[ex], &c).unwrap();
        let a = forward_eval(&p, &c, &batch).unwrap();
        let b = forward_eval(&p, &c, &batch).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_changes_training_forward() {
        let v = vocab();
        let c = cfg(v.size());
        let p = init_model(&c, 3).unwrap();
        let pair = SentencePair::from_strs("abcd", "abce").unwrap();
        let ex = template_rephrase(&pair, &v, &MaskPolicy::none(), 0, 0);
        let batch = Batch::from_examples(&[ex], &c).unwrap();
        let (t1, _) = forward_train(&p, &c, &batch, 7).unwrap();
        let (t2, _) = forward_train(&p, &c, &batch, 8).unwrap();
        let e = forward_eval(&p, &c, &batch).unwrap();
        assert_ne!(t1, t2);
        assert_ne!(t1, e);
    }

    #[test]
    fn uniform_logits_loss_is_ln_v() {
        let vsz = 100;
        let logits = Array3::from_elem((2, 3, vsz), 0.37);
        let labels = Array2::from_elem((2, 3), 5usize);
        let mask = Array2::from_elem((2, 3), true);
        let l = loss(&logits, &labels, &mask).unwrap();
        assert!((l - (vsz as f64).ln()).abs() < 1e-9, "loss {l}");
    }

    #[test]
    fn confident_correct_loss_vanishes() {
        let vsz = 20;
        let mut logits = Array3::zeros((1, 2, vsz));
        logits[(0, 0, 3)] = 50.0;
        logits[(0, 1, 7)] = 50.0;
        let labels = Array2::from_shape_vec((1, 2), vec![3usize, 7]).unwrap();
        let mask = Array2::from_elem((1, 2), true);
        let l = loss(&logits, &labels, &mask).unwrap();
        assert!(l < 1e-9, "loss {l}");
    }

    #[test]
    fn hand_computed_two_position_loss() {
        // Position A: logits [1, 2, 3], label index 2.
        // Position B: logits [0.5, 0, -0.5], label index 0.
        let mut logits = Array3::zeros((1, 2, 3));
        logits[(0, 0, 0)] = 1.0;
        logits[(0, 0, 1)] = 2.0;
        logits[(0, 0, 2)] = 3.0;
        logits[(0, 1, 0)] = 0.5;
        logits[(0, 1, 1)] = 0.0;
        logits[(0, 1, 2)] = -0.5;
        let labels = Array2::from_shape_vec((1, 2), vec![2usize, 0]).unwrap();
        let mask = Array2::from_elem((1, 2), true);
        let ce_a = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln() - 3.0;
        let ce_b = (0.5f64.exp() + 1.0 + (-0.5f64).exp()).ln() - 0.5;
        let expected = (ce_a + ce_b) / 2.0;
        let l = loss(&logits, &labels, &mask).unwrap();
        assert!((l - expected).abs() < 1e-12, "loss {l} vs {expected}");
    }

    #[test]
    fn loss_requires_a_position() {
        let logits = Array3::zeros((1, 2, 5));
        let labels = Array2::from_elem((1, 2), 0usize);
        let mask = Array2::from_elem((1, 2), false);
        assert!(matches!(
            loss(&logits, &labels, &mask),
            Err(NetError::NoLossPositions)
        ));
    }

    #[test]
    fn duplicated_batch_keeps_mean_gradient() {
        let v = vocab();
        let c = cfg(v.size());
        let p = init_model(&c, 5).unwrap();
        let pair = SentencePair::from_strs("abcd", "abce").unwrap();
        let ex = template_rephrase(&pair, &v, &MaskPolicy::none(), 0, 0);
        let single = Batch::from_examples(&[ex.clone()], &c).unwrap();
        let double = Batch::from_examples(&[ex.clone(), ex], &c).unwrap();
        let g1 = backward(&p, &c, &single).unwrap();
        let g2 = backward(&p, &c, &double).unwrap();
        let f1 = g1.flatten();
        let f2 = g2.flatten();
        let max_diff = f1
            .iter()
            .zip(&f2)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 1e-9, "max diff {max_diff}");
    }

    #[test]
    fn unused_prompt_tables_get_zero_grads() {
        let v = vocab();
        let c = cfg(v.size());
        let mut p = init_model(&c, 5).unwrap();
        p.add_prompt_table(
            PromptSpec {
                name: "csc".into(),
                id_offset: Vocab::PROMPT_BASE,
                len: 2,
            },
            c.d_model,
            1,
        );
        p.add_prompt_table(
            PromptSpec {
                name: "other".into(),
                id_offset: Vocab::PROMPT_BASE + 2,
                len: 2,
            },
            c.d_model,
            2,
        );
        let pair = SentencePair::from_strs("abcd", "abce").unwrap();
        let ex = template_rephrase(&pair, &v, &MaskPolicy::none(), 2, 0);
        let batch = Batch::from_examples(&[ex], &c).unwrap();
        let g = backward(&p, &c, &batch).unwrap();
        assert!(g.get("prompt.csc").iter().any(|&x| x != 0.0));
        assert!(g.get("prompt.other").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn causal_template_trains() {
        let v = vocab();
        let c = cfg(v.size());
        let p = init_model(&c, 6).unwrap();
        let pair = SentencePair::from_strs("abc", "abd").unwrap();
        let ex = template_autoregressive(&pair, &v);
        let batch = Batch::from_examples(&[ex], &c).unwrap();
        let (l, g) = loss_and_grads(&p, &c, &batch, None).unwrap();
        assert!(l.is_finite());
        assert!(g.global_norm() > 0.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Array2::from_shape_vec(
            (2, 4),
            vec![1000.0, -1000.0, 3.0, 0.0, -2.0, 7.5, 7.5, -1e30],
        )
        .unwrap();
        let s = softmax_rows(&x.view());
        for row in s.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }
}
