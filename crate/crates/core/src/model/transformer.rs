use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ModelError;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerShape {
    pub vocab_size: usize,
    pub context: usize,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
}

impl TransformerShape {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::ShapeMismatch(m.to_string()));
        if self.vocab_size == 0 || self.d_model == 0 || self.heads == 0 || self.layers == 0 {
            return bad("dimensions must be positive");
        }
        if self.d_model % self.heads != 0 {
            return bad("d_model must be divisible by heads");
        }
        if self.context < 2 {
            return bad("context must be at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    ln1_g: usize,
    ln1_b: usize,
    w_qkv: usize,
    b_qkv: usize,
    w_proj: usize,
    b_proj: usize,
    ln2_g: usize,
    ln2_b: usize,
    w_fc: usize,
    b_fc: usize,
    w_out: usize,
    b_out: usize,
}

/// Named slices of the flat parameter buffer.
#[derive(Debug, Clone)]
pub struct Layout {
    pub shape: TransformerShape,
    pub tensors: Vec<TensorInfo>,
    pub total: usize,
    wte: usize,
    wpe: usize,
    layers: Vec<LayerOffsets>,
    lnf_g: usize,
    lnf_b: usize,
    w_lm: usize,
    b_lm: usize,
}

impl Layout {
    pub fn new(shape: TransformerShape) -> Self {
        let (v, c, d) = (shape.vocab_size, shape.context, shape.d_model);
        let mut tensors = Vec::new();
        let mut total = 0;
        let mut add = |name: String, dims: Vec<usize>| {
            let offset = total;
            total += dims.iter().product::<usize>();
            tensors.push(TensorInfo { name, shape: dims, offset });
            offset
        };
        let wte = add("wte".into(), vec![v, d]);
        let wpe = add("wpe".into(), vec![c, d]);
        let layers = (0..shape.layers)
            .map(|l| {
                let mut a = |s: &str, dims: Vec<usize>| add(format!("h{l}.{s}"), dims);
                LayerOffsets {
                    ln1_g: a("ln1.g", vec![d]),
                    ln1_b: a("ln1.b", vec![d]),
                    w_qkv: a("attn.w_qkv", vec![d, 3 * d]),
                    b_qkv: a("attn.b_qkv", vec![3 * d]),
                    w_proj: a("attn.w_proj", vec![d, d]),
                    b_proj: a("attn.b_proj", vec![d]),
                    ln2_g: a("ln2.g", vec![d]),
                    ln2_b: a("ln2.b", vec![d]),
                    w_fc: a("mlp.w_fc", vec![d, 4 * d]),
                    b_fc: a("mlp.b_fc", vec![4 * d]),
                    w_out: a("mlp.w_proj", vec![4 * d, d]),
                    b_out: a("mlp.b_proj", vec![d]),
                }
            })
            .collect();
        let lnf_g = add("ln_f.g".into(), vec![d]);
        let lnf_b = add("ln_f.b".into(), vec![d]);
        let w_lm = add("lm_head.w".into(), vec![d, v]);
        let b_lm = add("lm_head.b".into(), vec![v]);
        Self { shape, tensors, total, wte, wpe, layers, lnf_g, lnf_b, w_lm, b_lm }
    }

    /// GPT-2 style initialization: N(0, 0.02) weights, residual projections
    /// scaled by 1/√(2L), zero biases, unit norm gains.
    pub fn init(&self, rng: &mut ChaCha8Rng) -> Vec<f32> {
        let mut p = vec![0.0f32; self.total];
        let std = 0.02;
        let resid_std = std / (2.0 * self.shape.layers as f64).sqrt();
        for t in &self.tensors {
            let slice = &mut p[t.offset..t.offset + t.len()];
            if t.name.ends_with(".g") {
                slice.fill(1.0);
            } else if t.shape.len() >= 2 {
                let s = if t.name.ends_with("w_proj") { resid_std } else { std };
                let dist = Normal::new(0.0, s).expect("positive std");
                for x in slice.iter_mut() {
                    *x = dist.sample(rng) as f32;
                }
            }
        }
        p
    }
}

fn c<F: Float>(x: f64) -> F {
    F::from(x).expect("representable constant")
}

/// `y[t, n] = x[t, m] · w[m, n] + b[n]`.
fn matmul<F: Float>(x: &[F], t: usize, m: usize, w: &[F], b: Option<&[F]>, n: usize) -> Vec<F> {
    let mut y = vec![F::zero(); t * n];
    for i in 0..t {
        let row = &mut y[i * n..(i + 1) * n];
        if let Some(b) = b {
            row.copy_from_slice(&b[..n]);
        }
        for k in 0..m {
            let a = x[i * m + k];
            if a == F::zero() {
                continue;
            }
            let wr = &w[k * n..(k + 1) * n];
            for j in 0..n {
                row[j] = row[j] + a * wr[j];
            }
        }
    }
    y
}

/// Backward of `y = x·w + b` with `w` and `b` stored at `w_off`/`b_off`
/// in the flat buffers; accumulates into `dx` and `grad`.
#[allow(clippy::too_many_arguments)]
fn matmul_back<F: Float>(
    x: &[F],
    t: usize,
    m: usize,
    p: &[F],
    (w_off, b_off): (usize, usize),
    n: usize,
    dy: &[F],
    dx: &mut [F],
    grad: &mut [F],
) {
    for i in 0..t {
        let dyr = &dy[i * n..(i + 1) * n];
        for k in 0..m {
            let a = x[i * m + k];
            let dwr = &mut grad[w_off + k * n..w_off + (k + 1) * n];
            for j in 0..n {
                dwr[j] = dwr[j] + a * dyr[j];
            }
        }
        let db = &mut grad[b_off..b_off + n];
        for j in 0..n {
            db[j] = db[j] + dyr[j];
        }
    }
    let w = &p[w_off..];
    for i in 0..t {
        let dyr = &dy[i * n..(i + 1) * n];
        for k in 0..m {
            let wr = &w[k * n..(k + 1) * n];
            let mut acc = F::zero();
            for j in 0..n {
                acc = acc + wr[j] * dyr[j];
            }
            dx[i * m + k] = dx[i * m + k] + acc;
        }
    }
}

struct LnCache<F> {
    xhat: Vec<F>,
    rstd: Vec<F>,
}

fn layernorm<F: Float>(x: &[F], t: usize, d: usize, g: &[F], b: &[F]) -> (Vec<F>, LnCache<F>) {
    let mut y = vec![F::zero(); t * d];
    let mut xhat = vec![F::zero(); t * d];
    let mut rstd = vec![F::zero(); t];
    let df = c::<F>(d as f64);
    for i in 0..t {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().fold(F::zero(), |a, &v| a + v) / df;
        let var = row.iter().fold(F::zero(), |a, &v| a + (v - mean) * (v - mean)) / df;
        let r = F::one() / (var + c(LN_EPS)).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[i * d + j] = h;
            y[i * d + j] = h * g[j] + b[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

#[allow(clippy::too_many_arguments)]
fn layernorm_back<F: Float>(
    dy: &[F],
    cache: &LnCache<F>,
    g: &[F],
    t: usize,
    d: usize,
    dx: &mut [F],
    dg: &mut [F],
    db: &mut [F],
) {
    let df = c::<F>(d as f64);
    for i in 0..t {
        let mut mean_dh = F::zero();
        let mut mean_dh_h = F::zero();
        for j in 0..d {
            let k = i * d + j;
            let dh = dy[k] * g[j];
            dg[j] = dg[j] + dy[k] * cache.xhat[k];
            db[j] = db[j] + dy[k];
            mean_dh = mean_dh + dh;
            mean_dh_h = mean_dh_h + dh * cache.xhat[k];
        }
        mean_dh = mean_dh / df;
        mean_dh_h = mean_dh_h / df;
        for j in 0..d {
            let k = i * d + j;
            let dh = dy[k] * g[j];
            dx[k] = dx[k] + cache.rstd[i] * (dh - mean_dh - cache.xhat[k] * mean_dh_h);
        }
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu<F: Float>(x: F) -> F {
    let u = c::<F>(GELU_K) * (x + c::<F>(GELU_A) * x * x * x);
    c::<F>(0.5) * x * (F::one() + u.tanh())
}

fn gelu_grad<F: Float>(x: F) -> F {
    let u = c::<F>(GELU_K) * (x + c::<F>(GELU_A) * x * x * x);
    let th = u.tanh();
    let du = c::<F>(GELU_K) * (F::one() + c::<F>(3.0 * GELU_A) * x * x);
    c::<F>(0.5) * (F::one() + th) + c::<F>(0.5) * x * (F::one() - th * th) * du
}

struct LayerCache<F> {
    ln1: LnCache<F>,
    a: Vec<F>,
    qkv: Vec<F>,
    att: Vec<F>,
    o: Vec<F>,
    mask1: Option<Vec<F>>,
    ln2: LnCache<F>,
    cn: Vec<F>,
    f: Vec<F>,
    g: Vec<F>,
    mask2: Option<Vec<F>>,
}

pub(crate) struct ForwardCache<F> {
    t: usize,
    mask0: Option<Vec<F>>,
    layers: Vec<LayerCache<F>>,
    lnf: LnCache<F>,
    hf: Vec<F>,
    pub logits: Vec<F>,
}

fn dropout_mask<F: Float>(len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<F> {
    let keep = c::<F>(1.0 / (1.0 - rate));
    (0..len).map(|_| if rng.random::<f64>() < rate { F::zero() } else { keep }).collect()
}

/// Forward pass over one window (`tokens.len() ≤ context`).
pub(crate) fn forward<F: Float>(
    lay: &Layout,
    p: &[F],
    tokens: &[u32],
    mut dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> ForwardCache<F> {
    let s = lay.shape;
    let (t, d, v) = (tokens.len(), s.d_model, s.vocab_size);
    let hd = d / s.heads;
    let scale = c::<F>(1.0 / (hd as f64).sqrt());
    debug_assert!(t <= s.context);

    let mut h = vec![F::zero(); t * d];
    for (i, &tok) in tokens.iter().enumerate() {
        let e = &p[lay.wte + tok as usize * d..][..d];
        let pe = &p[lay.wpe + i * d..][..d];
        for j in 0..d {
            h[i * d + j] = e[j] + pe[j];
        }
    }
    let mut make_mask = |len: usize| match dropout.as_mut() {
        Some((rate, rng)) if *rate > 0.0 => Some(dropout_mask::<F>(len, *rate, rng)),
        _ => None,
    };
    let mask0 = make_mask(t * d);
    if let Some(m) = &mask0 {
        for (x, k) in h.iter_mut().zip(m) {
            *x = *x * *k;
        }
    }

    let mut layers = Vec::with_capacity(s.layers);
    for lo in &lay.layers {
        let (a, ln1) = layernorm(&h, t, d, &p[lo.ln1_g..][..d], &p[lo.ln1_b..][..d]);
        let qkv = matmul(&a, t, d, &p[lo.w_qkv..], Some(&p[lo.b_qkv..]), 3 * d);
        let mut att = vec![F::zero(); s.heads * t * t];
        let mut o = vec![F::zero(); t * d];
        for hh in 0..s.heads {
            let (qo, ko, vo) = (hh * hd, d + hh * hd, 2 * d + hh * hd);
            for i in 0..t {
                let row = &mut att[(hh * t + i) * t..][..t];
                let mut mx = F::neg_infinity();
                for j in 0..=i {
                    let mut dot = F::zero();
                    for k in 0..hd {
                        dot = dot + qkv[i * 3 * d + qo + k] * qkv[j * 3 * d + ko + k];
                    }
                    row[j] = dot * scale;
                    mx = mx.max(row[j]);
                }
                let mut sum = F::zero();
                for x in row.iter_mut().take(i + 1) {
                    *x = (*x - mx).exp();
                    sum = sum + *x;
                }
                for x in row.iter_mut().take(i + 1) {
                    *x = *x / sum;
                }
                for j in 0..=i {
                    let w = row[j];
                    for k in 0..hd {
                        o[i * d + hh * hd + k] = o[i * d + hh * hd + k] + w * qkv[j * 3 * d + vo + k];
                    }
                }
            }
        }
        let y = matmul(&o, t, d, &p[lo.w_proj..], Some(&p[lo.b_proj..]), d);
        let mask1 = make_mask(t * d);
        let mut h_mid = h;
        for k in 0..t * d {
            let yk = mask1.as_ref().map_or(y[k], |m| y[k] * m[k]);
            h_mid[k] = h_mid[k] + yk;
        }
        let (cn, ln2) = layernorm(&h_mid, t, d, &p[lo.ln2_g..][..d], &p[lo.ln2_b..][..d]);
        let f = matmul(&cn, t, d, &p[lo.w_fc..], Some(&p[lo.b_fc..]), 4 * d);
        let g: Vec<F> = f.iter().map(|&x| gelu(x)).collect();
        let z = matmul(&g, t, 4 * d, &p[lo.w_out..], Some(&p[lo.b_out..]), d);
        let mask2 = make_mask(t * d);
        h = h_mid.clone();
        for k in 0..t * d {
            let zk = mask2.as_ref().map_or(z[k], |m| z[k] * m[k]);
            h[k] = h[k] + zk;
        }
        layers.push(LayerCache { ln1, a, qkv, att, o, mask1, ln2, cn, f, g, mask2 });
    }
    let (hf, lnf) = layernorm(&h, t, d, &p[lay.lnf_g..][..d], &p[lay.lnf_b..][..d]);
    let logits = matmul(&hf, t, d, &p[lay.w_lm..], Some(&p[lay.b_lm..]), v);
    ForwardCache { t, mask0, layers, lnf, hf, logits }
}

/// Deliberate backward-pass defects, used to show the gradient check bites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Fault {
    FlipLnFinalGain,
}

/// Sum of `−log p(tokens[j] | tokens[..j])` over `j ≥ loss_from`, with
/// gradients of `scale ×` that sum accumulated into `grad`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn loss_and_grad<F: Float>(
    lay: &Layout,
    p: &[F],
    tokens: &[u32],
    loss_from: usize,
    scale: F,
    dropout: Option<(f64, &mut ChaCha8Rng)>,
    grad: &mut [F],
    fault: Option<Fault>,
) -> F {
    let s = lay.shape;
    let (d, v) = (s.d_model, s.vocab_size);
    let hd = d / s.heads;
    let inv_sqrt = c::<F>(1.0 / (hd as f64).sqrt());
    let input = &tokens[..tokens.len() - 1];
    let cache = forward(lay, p, input, dropout);
    let t = cache.t;

    let mut loss = F::zero();
    let mut dlogits = vec![F::zero(); t * v];
    for i in 0..t {
        let target = tokens[i + 1] as usize;
        if i + 1 < loss_from {
            continue;
        }
        let row = &cache.logits[i * v..(i + 1) * v];
        let mx = row.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
        let sum = row.iter().fold(F::zero(), |a, &b| a + (b - mx).exp());
        let lse = mx + sum.ln();
        loss = loss + lse - row[target];
        for j in 0..v {
            dlogits[i * v + j] = (row[j] - lse).exp() * scale;
        }
        dlogits[i * v + target] = dlogits[i * v + target] - scale;
    }

    let mut dhf = vec![F::zero(); t * d];
    matmul_back(&cache.hf, t, d, p, (lay.w_lm, lay.b_lm), v, &dlogits, &mut dhf, grad);
    let mut dh = vec![F::zero(); t * d];
    {
        let mut dg = vec![F::zero(); d];
        let mut db = vec![F::zero(); d];
        layernorm_back(&dhf, &cache.lnf, &p[lay.lnf_g..][..d], t, d, &mut dh, &mut dg, &mut db);
        if fault == Some(Fault::FlipLnFinalGain) {
            for x in dg.iter_mut() {
                *x = -*x;
            }
        }
        add_into(grad, lay.lnf_g, &dg);
        add_into(grad, lay.lnf_b, &db);
    }

    for (lo, lc) in lay.layers.iter().zip(&cache.layers).rev() {
        // MLP branch.
        let dz: Vec<F> = match &lc.mask2 {
            Some(m) => dh.iter().zip(m).map(|(a, b)| *a * *b).collect(),
            None => dh.clone(),
        };
        let mut dgel = vec![F::zero(); t * 4 * d];
        matmul_back(&lc.g, t, 4 * d, p, (lo.w_out, lo.b_out), d, &dz, &mut dgel, grad);
        let df: Vec<F> = dgel.iter().zip(&lc.f).map(|(g, &x)| *g * gelu_grad(x)).collect();
        let mut dcn = vec![F::zero(); t * d];
        matmul_back(&lc.cn, t, d, p, (lo.w_fc, lo.b_fc), 4 * d, &df, &mut dcn, grad);
        let mut dh_mid = dh;
        {
            let mut dg = vec![F::zero(); d];
            let mut db = vec![F::zero(); d];
            layernorm_back(&dcn, &lc.ln2, &p[lo.ln2_g..][..d], t, d, &mut dh_mid, &mut dg, &mut db);
            add_into(grad, lo.ln2_g, &dg);
            add_into(grad, lo.ln2_b, &db);
        }

        // Attention branch.
        let dy: Vec<F> = match &lc.mask1 {
            Some(m) => dh_mid.iter().zip(m).map(|(a, b)| *a * *b).collect(),
            None => dh_mid.clone(),
        };
        let mut d_o = vec![F::zero(); t * d];
        matmul_back(&lc.o, t, d, p, (lo.w_proj, lo.b_proj), d, &dy, &mut d_o, grad);
        let mut dqkv = vec![F::zero(); t * 3 * d];
        let mut dp = vec![F::zero(); t];
        for hh in 0..s.heads {
            let (qo, ko, vo) = (hh * hd, d + hh * hd, 2 * d + hh * hd);
            for i in 0..t {
                let row = &lc.att[(hh * t + i) * t..][..t];
                let doi = &d_o[i * d + hh * hd..][..hd];
                let mut dot_sum = F::zero();
                for j in 0..=i {
                    let mut acc = F::zero();
                    for k in 0..hd {
                        acc = acc + doi[k] * lc.qkv[j * 3 * d + vo + k];
                        dqkv[j * 3 * d + vo + k] = dqkv[j * 3 * d + vo + k] + row[j] * doi[k];
                    }
                    dp[j] = acc;
                    dot_sum = dot_sum + row[j] * acc;
                }
                for j in 0..=i {
                    let ds = row[j] * (dp[j] - dot_sum) * inv_sqrt;
                    if ds == F::zero() {
                        continue;
                    }
                    for k in 0..hd {
                        dqkv[i * 3 * d + qo + k] = dqkv[i * 3 * d + qo + k] + ds * lc.qkv[j * 3 * d + ko + k];
                        dqkv[j * 3 * d + ko + k] = dqkv[j * 3 * d + ko + k] + ds * lc.qkv[i * 3 * d + qo + k];
                    }
                }
            }
        }
        let mut da = vec![F::zero(); t * d];
        matmul_back(&lc.a, t, d, p, (lo.w_qkv, lo.b_qkv), 3 * d, &dqkv, &mut da, grad);
        let mut dh_in = dh_mid;
        {
            let mut dg = vec![F::zero(); d];
            let mut db = vec![F::zero(); d];
            layernorm_back(&da, &lc.ln1, &p[lo.ln1_g..][..d], t, d, &mut dh_in, &mut dg, &mut db);
            add_into(grad, lo.ln1_g, &dg);
            add_into(grad, lo.ln1_b, &db);
        }
        dh = dh_in;
    }

    if let Some(m) = &cache.mask0 {
        for (x, k) in dh.iter_mut().zip(m) {
            *x = *x * *k;
        }
    }
    for (i, &tok) in input.iter().enumerate() {
        for j in 0..d {
            let g = dh[i * d + j];
            grad[lay.wte + tok as usize * d + j] = grad[lay.wte + tok as usize * d + j] + g;
            grad[lay.wpe + i * d + j] = grad[lay.wpe + i * d + j] + g;
        }
    }
    loss
}

fn add_into<F: Float>(grad: &mut [F], offset: usize, src: &[F]) {
    for (g, s) in grad[offset..offset + src.len()].iter_mut().zip(src) {
        *g = *g + *s;
    }
}

/// Log-probabilities of the last position, in f64.
pub(crate) fn last_logprobs(lay: &Layout, p: &[f32], tokens: &[u32]) -> Vec<f64> {
    let cache = forward::<f32>(lay, p, tokens, None);
    let v = lay.shape.vocab_size;
    let row: Vec<f64> = cache.logits[(cache.t - 1) * v..].iter().map(|&x| f64::from(x)).collect();
    log_softmax(&row)
}

/// Log-probabilities of `tokens[j]` for `j ≥ loss_from`.
pub(crate) fn window_logprobs(lay: &Layout, p: &[f32], tokens: &[u32], loss_from: usize) -> Vec<f64> {
    let cache = forward::<f32>(lay, p, &tokens[..tokens.len() - 1], None);
    let v = lay.shape.vocab_size;
    (loss_from.max(1)..tokens.len())
        .map(|j| {
            let row: Vec<f64> = cache.logits[(j - 1) * v..j * v].iter().map(|&x| f64::from(x)).collect();
            log_softmax(&row)[tokens[j] as usize]
        })
        .collect()
}

pub(crate) fn log_softmax(row: &[f64]) -> Vec<f64> {
    let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + row.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - lse).collect()
}
