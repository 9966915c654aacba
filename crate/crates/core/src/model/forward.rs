use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{cst, ModelConfig, ModelError, ModelParams, Scalar};
use crate::bpe::TokenId;

const LN_EPS: f64 = 1e-5;

struct LnCache<T> {
    xhat: Array2<T>,
    rstd: Array1<T>,
}

struct LayerCache<T> {
    ln1: LnCache<T>,
    h1: Array2<T>,
    qkv: Array2<T>,
    probs: Vec<Array2<T>>,
    attn: Array2<T>,
    drop_attn: Option<Array2<T>>,
    ln2: LnCache<T>,
    h2: Array2<T>,
    fc: Array2<T>,
    act: Array2<T>,
    drop_mlp: Option<Array2<T>>,
}

struct Cache<T> {
    ids: Vec<TokenId>,
    drop_emb: Option<Array2<T>>,
    layers: Vec<LayerCache<T>>,
    lnf: LnCache<T>,
    xf: Array2<T>,
}

/// Attention probabilities, `[layer][head]`, each `[len, len]`.
#[derive(Debug, Clone)]
pub struct AttentionTrace<T> {
    pub probs: Vec<Vec<Array2<T>>>,
}

/// Logits plus the attention pattern that produced them.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    /// `[len, vocab_size]`
    pub logits: Array2<T>,
    pub attention: AttentionTrace<T>,
}

impl<T: Scalar> Forward<T> {
    /// Runs the model; dropout is active iff `dropout_rng` is given and the
    /// configured rate is positive.
    pub fn run(
        config: &ModelConfig,
        params: &ModelParams<T>,
        ids: &[TokenId],
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Self, ModelError> {
        let cache = run(config, params, ids, dropout_rng)?;
        let logits = cache.xf.dot(&params.wte.t());
        let probs = cache.layers.into_iter().map(|l| l.probs).collect();
        Ok(Self { logits, attention: AttentionTrace { probs } })
    }
}

/// Eval-mode logits, `[len, vocab_size]`.
pub fn forward<T: Scalar>(config: &ModelConfig, params: &ModelParams<T>, ids: &[TokenId]) -> Result<Array2<T>, ModelError> {
    let cache = run(config, params, ids, None)?;
    Ok(cache.xf.dot(&params.wte.t()))
}

/// Eval-mode logits for the last position only.
pub fn forward_last<T: Scalar>(config: &ModelConfig, params: &ModelParams<T>, ids: &[TokenId]) -> Result<Array1<T>, ModelError> {
    let cache = run(config, params, ids, None)?;
    let last = cache.xf.row(cache.xf.nrows() - 1);
    Ok(params.wte.dot(&last))
}

/// Mean next-token cross-entropy (nats) over every position of every
/// sequence, eval mode.
pub fn loss<T: Scalar>(config: &ModelConfig, params: &ModelParams<T>, batch: &[Vec<TokenId>]) -> Result<f64, ModelError> {
    let total = count_targets(batch)?;
    let mut sum = 0.0;
    for seq in batch {
        let logits = forward(config, params, seq)?;
        for t in 0..seq.len() - 1 {
            sum += cross_entropy(logits.row(t).as_slice().unwrap(), seq[t + 1]);
        }
    }
    Ok(sum / total as f64)
}

/// Loss and its gradient with respect to every parameter.
pub fn loss_and_grad<T: Scalar>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    batch: &[Vec<TokenId>],
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, ModelParams<T>), ModelError> {
    let total = count_targets(batch)?;
    let inv_total = 1.0 / total as f64;
    let mut grads = ModelParams::zeros(config);
    let mut sum = 0.0;
    for seq in batch {
        let cache = run(config, params, seq, dropout_rng.as_deref_mut())?;
        let mut dlogits = cache.xf.dot(&params.wte.t());
        for t in 0..seq.len() {
            let row = dlogits.row_mut(t).into_slice().unwrap();
            if t + 1 < seq.len() {
                sum += cross_entropy_grad(row, seq[t + 1], inv_total);
            } else {
                row.fill(T::zero());
            }
        }
        backward(config, params, &cache, &dlogits, &mut grads);
    }
    Ok((sum * inv_total, grads))
}

fn count_targets(batch: &[Vec<TokenId>]) -> Result<usize, ModelError> {
    if batch.is_empty() || batch.iter().any(|s| s.len() < 2) {
        return Err(ModelError::SequenceTooShort);
    }
    Ok(batch.iter().map(|s| s.len() - 1).sum())
}

fn log_sum_exp<T: Scalar>(row: &[T]) -> f64 {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x.to_f64().unwrap()));
    let sum: f64 = row.iter().map(|x| (x.to_f64().unwrap() - max).exp()).sum();
    max + sum.ln()
}

/// `-log softmax(row)[target]`.
fn cross_entropy<T: Scalar>(row: &[T], target: TokenId) -> f64 {
    log_sum_exp(row) - row[target as usize].to_f64().unwrap()
}

/// Like [`cross_entropy`], and overwrites `row` with
/// `(softmax - onehot) * scale`.
fn cross_entropy_grad<T: Scalar>(row: &mut [T], target: TokenId, scale: f64) -> f64 {
    let lse = log_sum_exp(row);
    let loss = lse - row[target as usize].to_f64().unwrap();
    for (j, x) in row.iter_mut().enumerate() {
        let p = (x.to_f64().unwrap() - lse).exp();
        let onehot = if j == target as usize { 1.0 } else { 0.0 };
        *x = cst((p - onehot) * scale);
    }
    loss
}

fn check_ids(config: &ModelConfig, ids: &[TokenId]) -> Result<(), ModelError> {
    if ids.is_empty() {
        return Err(ModelError::SequenceTooShort);
    }
    if ids.len() > config.context_len {
        return Err(ModelError::ContextOverflow { len: ids.len(), max: config.context_len });
    }
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= config.vocab_size) {
        return Err(ModelError::TokenOutOfRange { id, vocab: config.vocab_size });
    }
    Ok(())
}

fn dropout_mask<T: Scalar>(rng: &mut ChaCha8Rng, shape: (usize, usize), p: f64) -> Array2<T> {
    let keep: T = cst(1.0 / (1.0 - p));
    Array2::from_shape_simple_fn(shape, || if rng.gen::<f64>() < p { T::zero() } else { keep })
}

fn layer_norm<T: Scalar>(x: &Array2<T>, g: &Array1<T>, b: &Array1<T>) -> (Array2<T>, LnCache<T>) {
    let (n, d) = x.dim();
    let inv_d: T = cst(1.0 / d as f64);
    let eps: T = cst(LN_EPS);
    let mut xhat = Array2::zeros((n, d));
    let mut rstd = Array1::zeros(n);
    for i in 0..n {
        let row = x.row(i);
        let mean = row.sum() * inv_d;
        let var = row.fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean)) * inv_d;
        let r = T::one() / (var + eps).sqrt();
        rstd[i] = r;
        xhat.row_mut(i).zip_mut_with(&row, |h, &v| *h = (v - mean) * r);
    }
    let y = &xhat * g + b;
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward<T: Scalar>(
    dy: &Array2<T>,
    cache: &LnCache<T>,
    g: &Array1<T>,
    dg: &mut Array1<T>,
    db: &mut Array1<T>,
) -> Array2<T> {
    let d = dy.ncols();
    let inv_d: T = cst(1.0 / d as f64);
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let mut dx = dy * g;
    for (i, mut row) in dx.axis_iter_mut(Axis(0)).enumerate() {
        let xhat = cache.xhat.row(i);
        let m1 = row.sum() * inv_d;
        let m2 = row.iter().zip(xhat.iter()).fold(T::zero(), |acc, (&a, &b)| acc + a * b) * inv_d;
        let r = cache.rstd[i];
        row.zip_mut_with(&xhat, |v, &h| *v = r * (*v - m1 - h * m2));
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

fn gelu<T: Scalar>(x: T) -> T {
    let half: T = cst(0.5);
    let c: T = cst(GELU_C);
    let a: T = cst(GELU_A);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let half: T = cst(0.5);
    let c: T = cst(GELU_C);
    let a: T = cst(GELU_A);
    let three: T = cst(3.0);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * a * x * x)
}

fn linear<T: Scalar>(x: &Array2<T>, w: &Array2<T>, b: &Array1<T>) -> Array2<T> {
    x.dot(w) + b
}

/// `dw += x^T dy`, `db += sum(dy)`, returns `dy w^T`.
fn linear_backward<T: Scalar>(
    x: &Array2<T>,
    w: &Array2<T>,
    dy: &Array2<T>,
    dw: &mut Array2<T>,
    db: &mut Array1<T>,
) -> Array2<T> {
    general_mat_mul(T::one(), &x.t(), dy, T::one(), dw);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

fn head_views<T: Scalar>(qkv: &Array2<T>, d: usize, hd: usize, h: usize) -> [ArrayView2<'_, T>; 3] {
    let off = h * hd;
    [
        qkv.slice(s![.., off..off + hd]),
        qkv.slice(s![.., d + off..d + off + hd]),
        qkv.slice(s![.., 2 * d + off..2 * d + off + hd]),
    ]
}

fn attention<T: Scalar>(config: &ModelConfig, qkv: &Array2<T>) -> (Array2<T>, Vec<Array2<T>>) {
    let n = qkv.nrows();
    let d = config.d_model;
    let hd = config.head_dim();
    let scale: T = cst(1.0 / (hd as f64).sqrt());
    let mut out = Array2::zeros((n, d));
    let mut probs = Vec::with_capacity(config.n_heads);
    for h in 0..config.n_heads {
        let [q, k, v] = head_views(qkv, d, hd, h);
        let mut p = q.dot(&k.t());
        for (i, mut row) in p.axis_iter_mut(Axis(0)).enumerate() {
            let row = row.as_slice_mut().unwrap();
            let max = row[..=i].iter().fold(T::neg_infinity(), |m, &x| m.max(x * scale));
            let mut sum = T::zero();
            for x in &mut row[..=i] {
                *x = (*x * scale - max).exp();
                sum += *x;
            }
            for x in &mut row[..=i] {
                *x /= sum;
            }
            row[i + 1..].fill(T::zero());
        }
        out.slice_mut(s![.., h * hd..(h + 1) * hd]).assign(&p.dot(&v));
        probs.push(p);
    }
    (out, probs)
}

fn attention_backward<T: Scalar>(config: &ModelConfig, qkv: &Array2<T>, probs: &[Array2<T>], dout: &Array2<T>) -> Array2<T> {
    let n = qkv.nrows();
    let d = config.d_model;
    let hd = config.head_dim();
    let scale: T = cst(1.0 / (hd as f64).sqrt());
    let mut dqkv = Array2::zeros((n, 3 * d));
    for (h, p) in probs.iter().enumerate() {
        let [q, k, v] = head_views(qkv, d, hd, h);
        let off = h * hd;
        let dout_h = dout.slice(s![.., off..off + hd]);
        let mut ds = dout_h.dot(&v.t());
        let dv = p.t().dot(&dout_h);
        for (i, mut row) in ds.axis_iter_mut(Axis(0)).enumerate() {
            let prow = p.row(i);
            let dot = row.iter().zip(prow.iter()).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            row.zip_mut_with(&prow, |g, &pij| *g = pij * (*g - dot) * scale);
        }
        dqkv.slice_mut(s![.., off..off + hd]).assign(&ds.dot(&k));
        dqkv.slice_mut(s![.., d + off..d + off + hd]).assign(&ds.t().dot(&q));
        dqkv.slice_mut(s![.., 2 * d + off..2 * d + off + hd]).assign(&dv);
    }
    dqkv
}

fn run<T: Scalar>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    ids: &[TokenId],
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Cache<T>, ModelError> {
    check_ids(config, ids)?;
    let n = ids.len();
    let d = config.d_model;
    let p_drop = config.dropout;
    let mut mask = |shape: (usize, usize)| -> Option<Array2<T>> {
        match rng.as_deref_mut() {
            Some(r) if p_drop > 0.0 => Some(dropout_mask(r, shape, p_drop)),
            _ => None,
        }
    };

    let mut x = Array2::zeros((n, d));
    for (t, &id) in ids.iter().enumerate() {
        let mut row = x.row_mut(t);
        row.assign(&params.wte.row(id as usize));
        row += &params.wpe.row(t);
    }
    let drop_emb = mask((n, d));
    if let Some(m) = &drop_emb {
        x *= m;
    }

    let mut layers = Vec::with_capacity(config.n_layers);
    for lp in &params.layers {
        let (h1, ln1) = layer_norm(&x, &lp.ln1_g, &lp.ln1_b);
        let qkv = linear(&h1, &lp.w_qkv, &lp.b_qkv);
        let (attn, probs) = attention(config, &qkv);
        let mut proj = linear(&attn, &lp.w_proj, &lp.b_proj);
        let drop_attn = mask((n, d));
        if let Some(m) = &drop_attn {
            proj *= m;
        }
        x += &proj;

        let (h2, ln2) = layer_norm(&x, &lp.ln2_g, &lp.ln2_b);
        let fc = linear(&h2, &lp.w_fc, &lp.b_fc);
        let act = fc.mapv(gelu);
        let mut mlp = linear(&act, &lp.w_out, &lp.b_out);
        let drop_mlp = mask((n, d));
        if let Some(m) = &drop_mlp {
            mlp *= m;
        }
        x += &mlp;
        layers.push(LayerCache { ln1, h1, qkv, probs, attn, drop_attn, ln2, h2, fc, act, drop_mlp });
    }
    let (xf, lnf) = layer_norm(&x, &params.lnf_g, &params.lnf_b);
    Ok(Cache { ids: ids.to_vec(), drop_emb, layers, lnf, xf })
}

fn backward<T: Scalar>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    cache: &Cache<T>,
    dlogits: &Array2<T>,
    grads: &mut ModelParams<T>,
) {
    let dxf = dlogits.dot(&params.wte);
    general_mat_mul(T::one(), &dlogits.t(), &cache.xf, T::one(), &mut grads.wte);
    let mut dx = layer_norm_backward(&dxf, &cache.lnf, &params.lnf_g, &mut grads.lnf_g, &mut grads.lnf_b);

    for ((lp, lc), lg) in params.layers.iter().zip(&cache.layers).zip(grads.layers.iter_mut()).rev() {
        let mut dmlp = dx.clone();
        if let Some(m) = &lc.drop_mlp {
            dmlp *= m;
        }
        let mut dact = linear_backward(&lc.act, &lp.w_out, &dmlp, &mut lg.w_out, &mut lg.b_out);
        dact.zip_mut_with(&lc.fc, |g, &f| *g *= gelu_grad(f));
        let dh2 = linear_backward(&lc.h2, &lp.w_fc, &dact, &mut lg.w_fc, &mut lg.b_fc);
        dx += &layer_norm_backward(&dh2, &lc.ln2, &lp.ln2_g, &mut lg.ln2_g, &mut lg.ln2_b);

        let mut dproj = dx.clone();
        if let Some(m) = &lc.drop_attn {
            dproj *= m;
        }
        let dattn = linear_backward(&lc.attn, &lp.w_proj, &dproj, &mut lg.w_proj, &mut lg.b_proj);
        let dqkv = attention_backward(config, &lc.qkv, &lc.probs, &dattn);
        let dh1 = linear_backward(&lc.h1, &lp.w_qkv, &dqkv, &mut lg.w_qkv, &mut lg.b_qkv);
        dx += &layer_norm_backward(&dh1, &lc.ln1, &lp.ln1_g, &mut lg.ln1_g, &mut lg.ln1_b);
    }

    if let Some(m) = &cache.drop_emb {
        dx *= m;
    }
    for (t, &id) in cache.ids.iter().enumerate() {
        let row = dx.row(t);
        let mut e = grads.wte.row_mut(id as usize);
        e += &row;
        let mut pos = grads.wpe.row_mut(t);
        pos += &row;
    }
}
