//! A small bidirectional encoder with tied input/output embeddings, written
//! out by hand with explicit backward passes.

use ndarray::{s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Embedding and hidden width.
    pub width: usize,
    /// Inner width of each feed-forward sublayer.
    pub ffn_width: usize,
    /// Number of self-attention blocks.
    pub blocks: usize,
    /// Maximum sequence length in pieces.
    pub max_len: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            width: 32,
            ffn_width: 64,
            blocks: 1,
            max_len: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Every trainable tensor. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// |vocab| x width; doubles as the output projection.
    pub embeddings: Array2<f64>,
    pub positions: Array2<f64>,
    pub blocks: Vec<Block>,
    pub ln_gain: Array1<f64>,
    pub ln_bias: Array1<f64>,
    pub output_bias: Array1<f64>,
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

impl Block {
    fn init(rng: &mut ChaCha8Rng, d: usize, h: usize) -> Self {
        let sd = 1.0 / (d as f64).sqrt();
        let sh = 1.0 / (h as f64).sqrt();
        Block {
            wq: normal_matrix(rng, d, d, sd),
            bq: Array1::zeros(d),
            wk: normal_matrix(rng, d, d, sd),
            bk: Array1::zeros(d),
            wv: normal_matrix(rng, d, d, sd),
            bv: Array1::zeros(d),
            wo: normal_matrix(rng, d, d, sd),
            bo: Array1::zeros(d),
            w1: normal_matrix(rng, d, h, sd),
            b1: Array1::zeros(h),
            w2: normal_matrix(rng, h, d, sh),
            b2: Array1::zeros(d),
        }
    }

    fn zeros_like(&self) -> Self {
        Block {
            wq: Array2::zeros(self.wq.raw_dim()),
            bq: Array1::zeros(self.bq.len()),
            wk: Array2::zeros(self.wk.raw_dim()),
            bk: Array1::zeros(self.bk.len()),
            wv: Array2::zeros(self.wv.raw_dim()),
            bv: Array1::zeros(self.bv.len()),
            wo: Array2::zeros(self.wo.raw_dim()),
            bo: Array1::zeros(self.bo.len()),
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.len()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array1::zeros(self.b2.len()),
        }
    }
}

/// Named flat view of one tensor.
pub struct TensorMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

fn tref<'a>(name: String, t: &'a dyn AsFlat) -> TensorRef<'a> {
    TensorRef {
        name,
        shape: t.shape_vec(),
        data: t.flat(),
    }
}

fn tmut<'a>(name: String, t: &'a mut dyn AsFlat) -> TensorMut<'a> {
    TensorMut {
        name,
        shape: t.shape_vec(),
        data: t.flat_mut(),
    }
}

macro_rules! each_tensor {
    ($params:expr, $wrap:ident, $($m:tt)*) => {{
        let p = $params;
        let mut out = vec![
            $wrap("embeddings".into(), & $($m)* p.embeddings),
            $wrap("positions".into(), & $($m)* p.positions),
        ];
        for (i, b) in (& $($m)* p.blocks).into_iter().enumerate() {
            out.push($wrap(format!("block{i}.wq"), & $($m)* b.wq));
            out.push($wrap(format!("block{i}.bq"), & $($m)* b.bq));
            out.push($wrap(format!("block{i}.wk"), & $($m)* b.wk));
            out.push($wrap(format!("block{i}.bk"), & $($m)* b.bk));
            out.push($wrap(format!("block{i}.wv"), & $($m)* b.wv));
            out.push($wrap(format!("block{i}.bv"), & $($m)* b.bv));
            out.push($wrap(format!("block{i}.wo"), & $($m)* b.wo));
            out.push($wrap(format!("block{i}.bo"), & $($m)* b.bo));
            out.push($wrap(format!("block{i}.w1"), & $($m)* b.w1));
            out.push($wrap(format!("block{i}.b1"), & $($m)* b.b1));
            out.push($wrap(format!("block{i}.w2"), & $($m)* b.w2));
            out.push($wrap(format!("block{i}.b2"), & $($m)* b.b2));
        }
        out.push($wrap("ln_gain".into(), & $($m)* p.ln_gain));
        out.push($wrap("ln_bias".into(), & $($m)* p.ln_bias));
        out.push($wrap("output_bias".into(), & $($m)* p.output_bias));
        out
    }};
}

impl Params {
    pub fn init(arch: &Architecture, vocab_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = arch.width;
        let embeddings = normal_matrix(&mut rng, vocab_size, d, 0.02);
        let positions = normal_matrix(&mut rng, arch.max_len, d, 0.02);
        let blocks = (0..arch.blocks)
            .map(|_| Block::init(&mut rng, d, arch.ffn_width))
            .collect();
        Params {
            embeddings,
            positions,
            blocks,
            ln_gain: Array1::ones(d),
            ln_bias: Array1::zeros(d),
            output_bias: Array1::zeros(vocab_size),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            embeddings: Array2::zeros(self.embeddings.raw_dim()),
            positions: Array2::zeros(self.positions.raw_dim()),
            blocks: self.blocks.iter().map(Block::zeros_like).collect(),
            ln_gain: Array1::zeros(self.ln_gain.len()),
            ln_bias: Array1::zeros(self.ln_bias.len()),
            output_bias: Array1::zeros(self.output_bias.len()),
        }
    }

    /// All tensors in a fixed order.
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        each_tensor!(self, tref,)
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        each_tensor!(self, tmut, mut)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }
}

pub trait AsFlat {
    fn shape_vec(&self) -> Vec<usize>;
    fn flat(&self) -> &[f64];
    fn flat_mut(&mut self) -> &mut [f64];
}

impl AsFlat for Array2<f64> {
    fn shape_vec(&self) -> Vec<usize> {
        self.shape().to_vec()
    }
    fn flat(&self) -> &[f64] {
        self.as_slice().expect("standard layout")
    }
    fn flat_mut(&mut self) -> &mut [f64] {
        self.as_slice_mut().expect("standard layout")
    }
}

impl AsFlat for Array1<f64> {
    fn shape_vec(&self) -> Vec<usize> {
        vec![self.len()]
    }
    fn flat(&self) -> &[f64] {
        self.as_slice().expect("standard layout")
    }
    fn flat_mut(&mut self) -> &mut [f64] {
        self.as_slice_mut().expect("standard layout")
    }
}

struct BlockCache {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Array2<f64>,
    ctx: Array2<f64>,
    mid: Array2<f64>,
    act: Array2<f64>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
pub struct ForwardCache {
    ids: Vec<u32>,
    blocks: Vec<BlockCache>,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    hidden: Array2<f64>,
}

impl ForwardCache {
    /// Final-layer representations, one row per input position.
    pub fn hidden(&self) -> &Array2<f64> {
        &self.hidden
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn add_row(m: &mut Array2<f64>, b: &Array1<f64>) {
    for mut row in m.rows_mut() {
        row += b;
    }
}

fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

impl Params {
    pub fn forward(&self, ids: &[u32]) -> ForwardCache {
        let t = ids.len();
        let d = self.embeddings.ncols();
        assert!(
            t >= 1 && t <= self.positions.nrows(),
            "sequence length {t} out of range"
        );
        let mut x = Array2::<f64>::zeros((t, d));
        for (i, &id) in ids.iter().enumerate() {
            let mut row = x.row_mut(i);
            row.assign(&self.embeddings.row(id as usize));
            row += &self.positions.row(i);
        }
        let scale = 1.0 / (d as f64).sqrt();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let mut q = x.dot(&b.wq);
            add_row(&mut q, &b.bq);
            let mut k = x.dot(&b.wk);
            add_row(&mut k, &b.bk);
            let mut v = x.dot(&b.wv);
            add_row(&mut v, &b.bv);
            let mut attn = q.dot(&k.t()) * scale;
            softmax_rows(&mut attn);
            let ctx = attn.dot(&v);
            let mut mid = ctx.dot(&b.wo);
            add_row(&mut mid, &b.bo);
            mid += &x;
            let mut act = mid.dot(&b.w1);
            add_row(&mut act, &b.b1);
            act.mapv_inplace(f64::tanh);
            let mut out = act.dot(&b.w2);
            add_row(&mut out, &b.b2);
            out += &mid;
            caches.push(BlockCache {
                input: std::mem::replace(&mut x, out),
                q,
                k,
                v,
                attn,
                ctx,
                mid,
                act,
            });
        }
        let mean = x.mean_axis(Axis(1)).expect("nonempty");
        let mut xhat = x;
        for (mut row, m) in xhat.rows_mut().into_iter().zip(mean.iter()) {
            row -= *m;
        }
        let var = xhat.mapv(|v| v * v).mean_axis(Axis(1)).expect("nonempty");
        let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
        for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter()) {
            row *= *s;
        }
        let mut hidden = &xhat * &self.ln_gain;
        add_row(&mut hidden, &self.ln_bias);
        ForwardCache {
            ids: ids.to_vec(),
            blocks: caches,
            xhat,
            inv_std,
            hidden,
        }
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative with
    /// respect to the final hidden states is `d_hidden`.
    pub fn backward(&self, cache: &ForwardCache, d_hidden: &Array2<f64>, grads: &mut Params) {
        let d = self.embeddings.ncols() as f64;
        // Final layer norm.
        grads.ln_gain += &(d_hidden * &cache.xhat).sum_axis(Axis(0));
        grads.ln_bias += &d_hidden.sum_axis(Axis(0));
        let dxhat = d_hidden * &self.ln_gain;
        let mut dx = Array2::<f64>::zeros(dxhat.raw_dim());
        for i in 0..dxhat.nrows() {
            let g = dxhat.row(i);
            let xh = cache.xhat.row(i);
            let mean_g = g.sum() / d;
            let mean_gx = g.dot(&xh) / d;
            let inv = cache.inv_std[i];
            let mut out = dx.row_mut(i);
            for j in 0..g.len() {
                out[j] = inv * (g[j] - mean_g - xh[j] * mean_gx);
            }
        }

        let scale = 1.0 / d.sqrt();
        for (bi, (b, c)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            let gb = &mut grads.blocks[bi];
            // Feed-forward sublayer with residual.
            let d_out = dx;
            gb.w2 += &c.act.t().dot(&d_out);
            gb.b2 += &d_out.sum_axis(Axis(0));
            let mut du = d_out.dot(&b.w2.t());
            du.zip_mut_with(&c.act, |g, &a| *g *= 1.0 - a * a);
            gb.w1 += &c.mid.t().dot(&du);
            gb.b1 += &du.sum_axis(Axis(0));
            let d_mid = d_out + du.dot(&b.w1.t());

            // Attention sublayer with residual.
            gb.wo += &c.ctx.t().dot(&d_mid);
            gb.bo += &d_mid.sum_axis(Axis(0));
            let d_ctx = d_mid.dot(&b.wo.t());
            let d_attn = d_ctx.dot(&c.v.t());
            let d_v = c.attn.t().dot(&d_ctx);
            let mut d_scores = d_attn;
            for i in 0..d_scores.nrows() {
                let a = c.attn.row(i);
                let mut row = d_scores.row_mut(i);
                let dot = row.dot(&a);
                row.zip_mut_with(&a, |g, &p| *g = p * (*g - dot) * scale);
            }
            let d_q = d_scores.dot(&c.k);
            let d_k = d_scores.t().dot(&c.q);
            gb.wq += &c.input.t().dot(&d_q);
            gb.bq += &d_q.sum_axis(Axis(0));
            gb.wk += &c.input.t().dot(&d_k);
            gb.bk += &d_k.sum_axis(Axis(0));
            gb.wv += &c.input.t().dot(&d_v);
            gb.bv += &d_v.sum_axis(Axis(0));
            dx = d_mid + d_q.dot(&b.wq.t()) + d_k.dot(&b.wk.t()) + d_v.dot(&b.wv.t());
        }

        for (i, &id) in cache.ids.iter().enumerate() {
            let g = dx.row(i);
            let mut e = grads.embeddings.row_mut(id as usize);
            e += &g;
            let mut p = grads.positions.row_mut(i);
            p += &g;
        }
    }

    /// Logits of every vocabulary entry at one hidden state (tied projection).
    pub fn logits(&self, hidden: ndarray::ArrayView1<f64>) -> Array1<f64> {
        self.embeddings.dot(&hidden) + &self.output_bias
    }

    /// Rows `start..` of the embedding table.
    pub fn embedding_rows(&self, start: usize) -> ndarray::ArrayView2<'_, f64> {
        self.embeddings.slice(s![start.., ..])
    }
}
