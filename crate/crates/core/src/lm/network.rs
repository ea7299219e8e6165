//! Pre-norm transformer encoder with an optional masked-LM head and an
//! optional sequence classification head, with hand-written backprop.
//!
//! Parameters live in one flat buffer described by a [`Layout`]; gradients
//! use the same layout, which keeps the optimizer, serialization and
//! finite-difference checks trivial.

use serde::{Deserialize, Serialize};

use super::tensor::{
    gelu, gelu_grad, gemm, layer_norm, layer_norm_backward, log_sum_exp, softmax_in_place, Scalar, View, ViewMut,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub vocab: usize,
    pub hidden: usize,
    pub heads: usize,
    pub layers: usize,
    pub max_positions: usize,
    pub mlm_head: bool,
    pub classes: usize,
}

impl Dims {
    pub fn ffn(&self) -> usize {
        4 * self.hidden
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub dims: Dims,
    pub tensors: Vec<TensorInfo>,
    tok: usize,
    pos: usize,
    layers: Vec<LayerOffsets>,
    lnf_g: usize,
    lnf_b: usize,
    mlm_w: usize,
    mlm_b: usize,
    cls_w: usize,
    cls_b: usize,
    total: usize,
}

impl Layout {
    pub fn new(dims: Dims) -> Self {
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut add = |name: String, shape: Vec<usize>| {
            let info = TensorInfo { name, offset, shape };
            offset += info.len();
            let at = info.offset;
            tensors.push(info);
            at
        };
        let (h, f) = (dims.hidden, dims.ffn());
        let tok = add("embeddings.token".into(), vec![dims.vocab, h]);
        let pos = add("embeddings.position".into(), vec![dims.max_positions, h]);
        let mut layers = Vec::with_capacity(dims.layers);
        for l in 0..dims.layers {
            let p = |s: &str| format!("layers.{l}.{s}");
            layers.push(LayerOffsets {
                ln1_g: add(p("ln1.gamma"), vec![h]),
                ln1_b: add(p("ln1.beta"), vec![h]),
                wq: add(p("attn.wq"), vec![h, h]),
                bq: add(p("attn.bq"), vec![h]),
                wk: add(p("attn.wk"), vec![h, h]),
                bk: add(p("attn.bk"), vec![h]),
                wv: add(p("attn.wv"), vec![h, h]),
                bv: add(p("attn.bv"), vec![h]),
                wo: add(p("attn.wo"), vec![h, h]),
                bo: add(p("attn.bo"), vec![h]),
                ln2_g: add(p("ln2.gamma"), vec![h]),
                ln2_b: add(p("ln2.beta"), vec![h]),
                w1: add(p("ffn.w1"), vec![h, f]),
                b1: add(p("ffn.b1"), vec![f]),
                w2: add(p("ffn.w2"), vec![f, h]),
                b2: add(p("ffn.b2"), vec![h]),
            });
        }
        let lnf_g = add("final_ln.gamma".into(), vec![h]);
        let lnf_b = add("final_ln.beta".into(), vec![h]);
        let (mlm_w, mlm_b) = if dims.mlm_head {
            (add("mlm_head.weight".into(), vec![h, dims.vocab]), add("mlm_head.bias".into(), vec![dims.vocab]))
        } else {
            (0, 0)
        };
        let (cls_w, cls_b) = if dims.classes > 0 {
            (add("cls_head.weight".into(), vec![h, dims.classes]), add("cls_head.bias".into(), vec![dims.classes]))
        } else {
            (0, 0)
        };
        Self { dims, tensors, tok, pos, layers, lnf_g, lnf_b, mlm_w, mlm_b, cls_w, cls_b, total: offset }
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// Encoder parameters over scalar type `T`.
#[derive(Debug, Clone)]
pub struct Network<T> {
    pub layout: Layout,
    pub params: Vec<T>,
}

/// Activations kept from a forward pass for the backward pass.
pub struct ForwardCache<T> {
    pub len: usize,
    ids: Vec<u32>,
    layers: Vec<LayerCache<T>>,
    lnf_xhat: Vec<T>,
    lnf_rstd: Vec<T>,
    /// Final hidden states, `len x hidden`.
    pub hidden: Vec<T>,
}

struct LayerCache<T> {
    ln1_xhat: Vec<T>,
    ln1_rstd: Vec<T>,
    a: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    probs: Vec<T>,
    ctx: Vec<T>,
    ln2_xhat: Vec<T>,
    ln2_rstd: Vec<T>,
    c: Vec<T>,
    f: Vec<T>,
    g: Vec<T>,
}

fn add_bias<T: Scalar>(m: &mut [T], rows: usize, bias: &[T]) {
    let cols = bias.len();
    for r in 0..rows {
        for (v, &b) in m[r * cols..(r + 1) * cols].iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn bias_grad<T: Scalar>(d: &[T], rows: usize, db: &mut [T]) {
    let cols = db.len();
    for r in 0..rows {
        for (g, &v) in db.iter_mut().zip(&d[r * cols..(r + 1) * cols]) {
            *g += v;
        }
    }
}

impl<T: Scalar> Network<T> {
    /// Weights ~ N(0, 0.02), biases zero, layer-norm gains one.
    pub fn init(dims: Dims, seed: u64) -> Self
    where
        T: Scalar,
    {
        use rand_distr::{Distribution, Normal};
        let layout = Layout::new(dims);
        let mut params = vec![T::zero(); layout.total()];
        let mut rng = rng::seeded(seed);
        let normal = Normal::new(0.0f64, 0.02).expect("valid normal");
        for t in &layout.tensors {
            let slice = &mut params[t.range()];
            if t.name.ends_with("gamma") {
                slice.fill(T::one());
            } else if t.shape.len() == 2 {
                for v in slice.iter_mut() {
                    // round through f32 so f32 and f64 networks share the same init
                    *v = T::of(normal.sample(&mut rng) as f32 as f64);
                }
            }
        }
        Self { layout, params }
    }

    pub fn dims(&self) -> Dims {
        self.layout.dims
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layout: self.layout.clone(),
            params: self.params.iter().map(|v| U::of(v.to_f64().unwrap())).collect(),
        }
    }

    pub fn zeros_like(&self) -> Vec<T> {
        vec![T::zero(); self.params.len()]
    }

    fn p(&self, offset: usize, len: usize) -> &[T] {
        &self.params[offset..offset + len]
    }

    pub fn forward(&self, ids: &[u32]) -> ForwardCache<T> {
        let d = self.layout.dims;
        let (l, h, f, nh, dh) = (ids.len(), d.hidden, d.ffn(), d.heads, d.head_dim());
        assert!(l <= d.max_positions, "sequence longer than positional table");
        let scale = T::one() / T::of(dh as f64).sqrt();

        let mut x = vec![T::zero(); l * h];
        for (t, &id) in ids.iter().enumerate() {
            let te = self.p(self.layout.tok + id as usize * h, h);
            let pe = self.p(self.layout.pos + t * h, h);
            for c in 0..h {
                x[t * h + c] = te[c] + pe[c];
            }
        }

        let mut layers = Vec::with_capacity(d.layers);
        for lo in &self.layout.layers {
            let mut a = vec![T::zero(); l * h];
            let mut ln1_xhat = vec![T::zero(); l * h];
            let mut ln1_rstd = vec![T::zero(); l];
            layer_norm(&x, l, h, self.p(lo.ln1_g, h), self.p(lo.ln1_b, h), &mut a, &mut ln1_xhat, &mut ln1_rstd);

            let project = |w: usize, b: usize| {
                let mut out = vec![T::zero(); l * h];
                gemm(T::one(), View::new(&a, l, h), View::new(self.p(w, h * h), h, h), T::zero(), ViewMut::new(&mut out, l, h));
                add_bias(&mut out, l, self.p(b, h));
                out
            };
            let q = project(lo.wq, lo.bq);
            let k = project(lo.wk, lo.bk);
            let v = project(lo.wv, lo.bv);

            let mut probs = vec![T::zero(); nh * l * l];
            let mut ctx = vec![T::zero(); l * h];
            for head in 0..nh {
                let s = &mut probs[head * l * l..(head + 1) * l * l];
                gemm(
                    scale,
                    View::cols_of(&q, l, h, head * dh, dh),
                    View::cols_of(&k, l, h, head * dh, dh).t(),
                    T::zero(),
                    ViewMut::new(s, l, l),
                );
                for r in 0..l {
                    softmax_in_place(&mut s[r * l..(r + 1) * l]);
                }
                gemm(
                    T::one(),
                    View::new(s, l, l),
                    View::cols_of(&v, l, h, head * dh, dh),
                    T::zero(),
                    ViewMut::cols_of(&mut ctx, l, h, head * dh, dh),
                );
            }
            let mut x1 = x.clone();
            gemm(T::one(), View::new(&ctx, l, h), View::new(self.p(lo.wo, h * h), h, h), T::one(), ViewMut::new(&mut x1, l, h));
            add_bias(&mut x1, l, self.p(lo.bo, h));

            let mut c = vec![T::zero(); l * h];
            let mut ln2_xhat = vec![T::zero(); l * h];
            let mut ln2_rstd = vec![T::zero(); l];
            layer_norm(&x1, l, h, self.p(lo.ln2_g, h), self.p(lo.ln2_b, h), &mut c, &mut ln2_xhat, &mut ln2_rstd);
            let mut fpre = vec![T::zero(); l * f];
            gemm(T::one(), View::new(&c, l, h), View::new(self.p(lo.w1, h * f), h, f), T::zero(), ViewMut::new(&mut fpre, l, f));
            add_bias(&mut fpre, l, self.p(lo.b1, f));
            let g: Vec<T> = fpre.iter().map(|&v| gelu(v)).collect();
            let mut x2 = x1;
            gemm(T::one(), View::new(&g, l, f), View::new(self.p(lo.w2, f * h), f, h), T::one(), ViewMut::new(&mut x2, l, h));
            add_bias(&mut x2, l, self.p(lo.b2, h));

            layers.push(LayerCache { ln1_xhat, ln1_rstd, a, q, k, v, probs, ctx, ln2_xhat, ln2_rstd, c, f: fpre, g });
            x = x2;
        }

        let mut hidden = vec![T::zero(); l * h];
        let mut lnf_xhat = vec![T::zero(); l * h];
        let mut lnf_rstd = vec![T::zero(); l];
        layer_norm(&x, l, h, self.p(self.layout.lnf_g, h), self.p(self.layout.lnf_b, h), &mut hidden, &mut lnf_xhat, &mut lnf_rstd);
        ForwardCache { len: l, ids: ids.to_vec(), layers, lnf_xhat, lnf_rstd, hidden }
    }

    /// Backpropagates `d_hidden` (gradient w.r.t. final hidden states) and
    /// accumulates parameter gradients into `grad`.
    pub fn backward(&self, cache: &ForwardCache<T>, d_hidden: &[T], grad: &mut [T]) {
        let d = self.layout.dims;
        let (l, h, f, nh, dh) = (cache.len, d.hidden, d.ffn(), d.heads, d.head_dim());
        let scale = T::one() / T::of(dh as f64).sqrt();

        let mut dx = vec![T::zero(); l * h];
        {
            let (gg, gb) = split_two(grad, self.layout.lnf_g, self.layout.lnf_b, h);
            layer_norm_backward(d_hidden, &cache.lnf_xhat, &cache.lnf_rstd, self.p(self.layout.lnf_g, h), l, h, &mut dx, gg, gb);
        }

        for (lo, lc) in self.layout.layers.iter().zip(&cache.layers).rev() {
            // x2 = x1 + gelu(c W1 + b1) W2 + b2
            let dx2 = dx;
            bias_grad(&dx2, l, &mut grad[lo.b2..lo.b2 + h]);
            gemm(T::one(), View::new(&lc.g, l, f).t(), View::new(&dx2, l, h), T::one(), ViewMut::new(&mut grad[lo.w2..lo.w2 + f * h], f, h));
            let mut dg = vec![T::zero(); l * f];
            gemm(T::one(), View::new(&dx2, l, h), View::new(self.p(lo.w2, f * h), f, h).t(), T::zero(), ViewMut::new(&mut dg, l, f));
            for (dgv, &fv) in dg.iter_mut().zip(&lc.f) {
                *dgv = *dgv * gelu_grad(fv);
            }
            let df = dg;
            bias_grad(&df, l, &mut grad[lo.b1..lo.b1 + f]);
            gemm(T::one(), View::new(&lc.c, l, h).t(), View::new(&df, l, f), T::one(), ViewMut::new(&mut grad[lo.w1..lo.w1 + h * f], h, f));
            let mut dc = vec![T::zero(); l * h];
            gemm(T::one(), View::new(&df, l, f), View::new(self.p(lo.w1, h * f), h, f).t(), T::zero(), ViewMut::new(&mut dc, l, h));
            let mut dx1 = dx2;
            {
                let (gg, gb) = split_two(grad, lo.ln2_g, lo.ln2_b, h);
                layer_norm_backward(&dc, &lc.ln2_xhat, &lc.ln2_rstd, self.p(lo.ln2_g, h), l, h, &mut dx1, gg, gb);
            }

            // x1 = x + ctx Wo + bo
            bias_grad(&dx1, l, &mut grad[lo.bo..lo.bo + h]);
            gemm(T::one(), View::new(&lc.ctx, l, h).t(), View::new(&dx1, l, h), T::one(), ViewMut::new(&mut grad[lo.wo..lo.wo + h * h], h, h));
            let mut dctx = vec![T::zero(); l * h];
            gemm(T::one(), View::new(&dx1, l, h), View::new(self.p(lo.wo, h * h), h, h).t(), T::zero(), ViewMut::new(&mut dctx, l, h));

            let mut dq = vec![T::zero(); l * h];
            let mut dk = vec![T::zero(); l * h];
            let mut dv = vec![T::zero(); l * h];
            let mut dp = vec![T::zero(); l * l];
            for head in 0..nh {
                let probs = &lc.probs[head * l * l..(head + 1) * l * l];
                // dP = dctx_h V_h^T
                gemm(
                    T::one(),
                    View::cols_of(&dctx, l, h, head * dh, dh),
                    View::cols_of(&lc.v, l, h, head * dh, dh).t(),
                    T::zero(),
                    ViewMut::new(&mut dp, l, l),
                );
                // dV_h = P^T dctx_h
                gemm(
                    T::one(),
                    View::new(probs, l, l).t(),
                    View::cols_of(&dctx, l, h, head * dh, dh),
                    T::zero(),
                    ViewMut::cols_of(&mut dv, l, h, head * dh, dh),
                );
                // softmax backward
                for r in 0..l {
                    let pr = &probs[r * l..(r + 1) * l];
                    let dr = &mut dp[r * l..(r + 1) * l];
                    let dot: T = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum();
                    for (dv_, &pv) in dr.iter_mut().zip(pr) {
                        *dv_ = pv * (*dv_ - dot);
                    }
                }
                gemm(
                    scale,
                    View::new(&dp, l, l),
                    View::cols_of(&lc.k, l, h, head * dh, dh),
                    T::zero(),
                    ViewMut::cols_of(&mut dq, l, h, head * dh, dh),
                );
                gemm(
                    scale,
                    View::new(&dp, l, l).t(),
                    View::cols_of(&lc.q, l, h, head * dh, dh),
                    T::zero(),
                    ViewMut::cols_of(&mut dk, l, h, head * dh, dh),
                );
            }

            let mut da = vec![T::zero(); l * h];
            for (dproj, w, b) in [(&dq, lo.wq, lo.bq), (&dk, lo.wk, lo.bk), (&dv, lo.wv, lo.bv)] {
                bias_grad(dproj, l, &mut grad[b..b + h]);
                gemm(T::one(), View::new(&lc.a, l, h).t(), View::new(dproj, l, h), T::one(), ViewMut::new(&mut grad[w..w + h * h], h, h));
                gemm(T::one(), View::new(dproj, l, h), View::new(self.p(w, h * h), h, h).t(), T::one(), ViewMut::new(&mut da, l, h));
            }
            let mut dxin = dx1;
            {
                let (gg, gb) = split_two(grad, lo.ln1_g, lo.ln1_b, h);
                layer_norm_backward(&da, &lc.ln1_xhat, &lc.ln1_rstd, self.p(lo.ln1_g, h), l, h, &mut dxin, gg, gb);
            }
            dx = dxin;
        }

        for (t, &id) in cache.ids.iter().enumerate() {
            let row = &dx[t * h..(t + 1) * h];
            let te = self.layout.tok + id as usize * h;
            let pe = self.layout.pos + t * h;
            for c in 0..h {
                grad[te + c] += row[c];
                grad[pe + c] += row[c];
            }
        }
    }

    /// Masked-LM logits for the given positions, `positions.len() x vocab`.
    pub fn mlm_logits(&self, cache: &ForwardCache<T>, positions: &[usize]) -> Vec<T> {
        assert!(self.layout.dims.mlm_head, "network has no MLM head");
        let (h, v) = (self.layout.dims.hidden, self.layout.dims.vocab);
        let rows = self.gather(cache, positions);
        let mut logits = vec![T::zero(); positions.len() * v];
        gemm(T::one(), View::new(&rows, positions.len(), h), View::new(self.p(self.layout.mlm_w, h * v), h, v), T::zero(), ViewMut::new(&mut logits, positions.len(), v));
        add_bias(&mut logits, positions.len(), self.p(self.layout.mlm_b, v));
        logits
    }

    fn gather(&self, cache: &ForwardCache<T>, positions: &[usize]) -> Vec<T> {
        let h = self.layout.dims.hidden;
        let mut rows = Vec::with_capacity(positions.len() * h);
        for &p in positions {
            rows.extend_from_slice(&cache.hidden[p * h..(p + 1) * h]);
        }
        rows
    }

    /// Summed cross-entropy of `targets` at `positions`, each term weighted
    /// by `weight`. Head gradients go into `grad`; the gradient w.r.t. the
    /// final hidden states is added to `d_hidden`.
    pub fn mlm_loss(
        &self,
        cache: &ForwardCache<T>,
        positions: &[usize],
        targets: &[u32],
        weight: T,
        grad: &mut [T],
        d_hidden: &mut [T],
    ) -> f64 {
        let (h, v, m) = (self.layout.dims.hidden, self.layout.dims.vocab, positions.len());
        if m == 0 {
            return 0.0;
        }
        let rows = self.gather(cache, positions);
        let mut dlogits = self.mlm_logits(cache, positions);
        let mut loss = 0.0;
        for (i, &target) in targets.iter().enumerate() {
            let row = &mut dlogits[i * v..(i + 1) * v];
            loss += (log_sum_exp(row) - row[target as usize]).to_f64().unwrap();
            softmax_in_place(row);
            row[target as usize] -= T::one();
            for x in row.iter_mut() {
                *x = *x * weight;
            }
        }
        bias_grad(&dlogits, m, &mut grad[self.layout.mlm_b..self.layout.mlm_b + v]);
        gemm(T::one(), View::new(&rows, m, h).t(), View::new(&dlogits, m, v), T::one(), ViewMut::new(&mut grad[self.layout.mlm_w..self.layout.mlm_w + h * v], h, v));
        let mut drows = vec![T::zero(); m * h];
        gemm(T::one(), View::new(&dlogits, m, v), View::new(self.p(self.layout.mlm_w, h * v), h, v).t(), T::zero(), ViewMut::new(&mut drows, m, h));
        for (i, &p) in positions.iter().enumerate() {
            for c in 0..h {
                d_hidden[p * h + c] += drows[i * h + c];
            }
        }
        loss
    }

    /// Classification logits read at position 0.
    pub fn class_logits(&self, cache: &ForwardCache<T>) -> Vec<T> {
        let (h, k) = (self.layout.dims.hidden, self.layout.dims.classes);
        assert!(k > 0, "network has no classification head");
        let w = self.p(self.layout.cls_w, h * k);
        let b = self.p(self.layout.cls_b, k);
        let x = &cache.hidden[..h];
        (0..k).map(|j| b[j] + (0..h).map(|c| x[c] * w[c * k + j]).sum::<T>()).collect()
    }

    /// Weighted cross-entropy of the classification head against `label`.
    pub fn class_loss(&self, cache: &ForwardCache<T>, label: usize, weight: T, grad: &mut [T], d_hidden: &mut [T]) -> f64 {
        let (h, k) = (self.layout.dims.hidden, self.layout.dims.classes);
        let mut logits = self.class_logits(cache);
        let loss = (log_sum_exp(&logits) - logits[label]).to_f64().unwrap();
        softmax_in_place(&mut logits);
        logits[label] -= T::one();
        let x = &cache.hidden[..h];
        let w = self.layout.cls_w;
        for j in 0..k {
            let dz = logits[j] * weight;
            grad[self.layout.cls_b + j] += dz;
            for c in 0..h {
                grad[w + c * k + j] += x[c] * dz;
                d_hidden[c] += self.params[w + c * k + j] * dz;
            }
        }
        loss
    }
}

fn split_two<T>(grad: &mut [T], a: usize, b: usize, len: usize) -> (&mut [T], &mut [T]) {
    debug_assert!(a + len <= b);
    let (left, right) = grad.split_at_mut(b);
    (&mut left[a..a + len], &mut right[..len])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(mlm: bool, classes: usize) -> Network<f64> {
        let dims = Dims { vocab: 11, hidden: 8, heads: 2, layers: 2, max_positions: 8, mlm_head: mlm, classes };
        let mut net = Network::<f64>::init(dims, 3);
        // Push parameters away from the degenerate init so every path carries signal.
        let mut rng = crate::rng::seeded(99);
        use rand::Rng;
        for v in net.params.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        net
    }

    fn mlm_objective(net: &Network<f64>, ids: &[u32], pos: &[usize], tgt: &[u32]) -> f64 {
        let cache = net.forward(ids);
        let mut g = net.zeros_like();
        let mut dh = vec![0.0; cache.hidden.len()];
        net.mlm_loss(&cache, pos, tgt, 1.0, &mut g, &mut dh)
    }

    #[test]
    fn mlm_gradient_matches_finite_differences() {
        let net = toy(true, 0);
        let ids = [2u32, 7, 4, 9, 4, 3];
        let (pos, tgt) = ([2usize, 4], [5u32, 8]);
        let cache = net.forward(&ids);
        let mut grad = net.zeros_like();
        let mut dh = vec![0.0; cache.hidden.len()];
        net.mlm_loss(&cache, &pos, &tgt, 1.0, &mut grad, &mut dh);
        net.backward(&cache, &dh, &mut grad);

        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for (i, &g) in grad.iter().enumerate().step_by(7) {
            let mut plus = net.clone();
            plus.params[i] += eps;
            let mut minus = net.clone();
            minus.params[i] -= eps;
            let fd = (mlm_objective(&plus, &ids, &pos, &tgt) - mlm_objective(&minus, &ids, &pos, &tgt)) / (2.0 * eps);
            let denom = g.abs().max(fd.abs()).max(1e-7);
            worst = worst.max((g - fd).abs() / denom);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn class_gradient_matches_finite_differences() {
        let net = toy(false, 2);
        let ids = [2u32, 6, 10, 3];
        let objective = |n: &Network<f64>| {
            let c = n.forward(&ids);
            let mut g = n.zeros_like();
            let mut dh = vec![0.0; c.hidden.len()];
            n.class_loss(&c, 1, 1.0, &mut g, &mut dh)
        };
        let cache = net.forward(&ids);
        let mut grad = net.zeros_like();
        let mut dh = vec![0.0; cache.hidden.len()];
        net.class_loss(&cache, 1, 1.0, &mut grad, &mut dh);
        net.backward(&cache, &dh, &mut grad);
        let eps = 1e-5;
        for (i, &g) in grad.iter().enumerate().step_by(5) {
            let mut plus = net.clone();
            plus.params[i] += eps;
            let mut minus = net.clone();
            minus.params[i] -= eps;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * eps);
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-7);
            assert!(rel < 1e-4, "param {i}: analytic {g} vs fd {fd}");
        }
    }

    #[test]
    fn f32_and_f64_agree() {
        let net = toy(true, 0);
        let n32: Network<f32> = net.cast();
        let ids = [2u32, 5, 6, 3];
        let a = net.forward(&ids).hidden;
        let b = n32.forward(&ids).hidden;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - *y as f64).abs() < 1e-4);
        }
    }
}
