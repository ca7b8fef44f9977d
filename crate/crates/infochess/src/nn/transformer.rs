//! Causal transformer encoder over observation histories with two MLP heads.
//!
//! Each observation token is projected to the model width and summed with a
//! learned positional embedding, then passes through pre-norm blocks of
//! causal multi-head self-attention and a ReLU feed-forward layer. A final
//! layer norm yields the trunk representation of every position. The king
//! head and visibility head are two-layer MLPs on that representation.
//!
//! Causal masking makes the representation at position `t` depend only on
//! tokens `0..=t`, so one pass over a full history yields the prediction for
//! every prefix, and inference can extend a key/value cache one token at a
//! time.
//!
//! All parameters live in one flat `Vec<f32>`; the trunk occupies a
//! contiguous prefix so it can be hashed or frozen as a unit.

use rand::{Rng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{axpy, dot, gemm, glorot, matvec};

const LN_EPS: f32 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input: usize,
    pub width: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn: usize,
    pub max_len: usize,
    pub head_hidden: usize,
    pub outputs: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            input: infochess_core::encode::ENCODED_LEN,
            width: 128,
            heads: 4,
            layers: 2,
            ffn: 256,
            max_len: 26,
            head_hidden: 128,
            outputs: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    /// Number of scalar elements.
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerIdx {
    ln1_g: usize,
    ln1_b: usize,
    w_qkv: usize,
    b_qkv: usize,
    w_o: usize,
    b_o: usize,
    ln2_g: usize,
    ln2_b: usize,
    w_1: usize,
    b_1: usize,
    w_2: usize,
    b_2: usize,
}

#[derive(Debug, Clone, Copy)]
struct HeadIdx {
    w_1: usize,
    b_1: usize,
    w_2: usize,
    b_2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    King,
    Visibility,
}

/// Offsets of every tensor in the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Layout {
    pub dims: ModelDims,
    w_in: usize,
    b_in: usize,
    pos: usize,
    layers: Vec<LayerIdx>,
    lnf_g: usize,
    lnf_b: usize,
    pub trunk_len: usize,
    king: HeadIdx,
    vis: HeadIdx,
    pub total: usize,
    pub specs: Vec<TensorSpec>,
}

impl Layout {
    pub fn new(dims: ModelDims) -> Layout {
        let mut specs: Vec<TensorSpec> = Vec::new();
        let mut alloc = |name: String, shape: Vec<usize>| {
            let offset = specs.last().map_or(0, |s| s.offset + s.numel());
            specs.push(TensorSpec { name, shape, offset });
            offset
        };
        let (d, f) = (dims.width, dims.ffn);
        // Stored [input, width] so sparse inputs gather contiguous rows.
        let w_in = alloc("embed.w".into(), vec![dims.input, d]);
        let b_in = alloc("embed.b".into(), vec![d]);
        let pos = alloc("embed.pos".into(), vec![dims.max_len, d]);
        let layers = (0..dims.layers)
            .map(|l| LayerIdx {
                ln1_g: alloc(format!("layer{l}.ln1.g"), vec![d]),
                ln1_b: alloc(format!("layer{l}.ln1.b"), vec![d]),
                w_qkv: alloc(format!("layer{l}.attn.qkv.w"), vec![3 * d, d]),
                b_qkv: alloc(format!("layer{l}.attn.qkv.b"), vec![3 * d]),
                w_o: alloc(format!("layer{l}.attn.out.w"), vec![d, d]),
                b_o: alloc(format!("layer{l}.attn.out.b"), vec![d]),
                ln2_g: alloc(format!("layer{l}.ln2.g"), vec![d]),
                ln2_b: alloc(format!("layer{l}.ln2.b"), vec![d]),
                w_1: alloc(format!("layer{l}.ffn.1.w"), vec![f, d]),
                b_1: alloc(format!("layer{l}.ffn.1.b"), vec![f]),
                w_2: alloc(format!("layer{l}.ffn.2.w"), vec![d, f]),
                b_2: alloc(format!("layer{l}.ffn.2.b"), vec![d]),
            })
            .collect();
        let lnf_g = alloc("final_ln.g".into(), vec![d]);
        let lnf_b = alloc("final_ln.b".into(), vec![d]);
        let trunk_len = lnf_b + d;
        let mut head = |name: &str| HeadIdx {
            w_1: alloc(format!("{name}.1.w"), vec![dims.head_hidden, d]),
            b_1: alloc(format!("{name}.1.b"), vec![dims.head_hidden]),
            w_2: alloc(format!("{name}.2.w"), vec![dims.outputs, dims.head_hidden]),
            b_2: alloc(format!("{name}.2.b"), vec![dims.outputs]),
        };
        let king = head("king_head");
        let vis = head("visibility_head");
        let total = specs.last().map_or(0, |s| s.offset + s.numel());
        Layout { dims, w_in, b_in, pos, layers, lnf_g, lnf_b, trunk_len, king, vis, total, specs }
    }

    fn head(&self, head: Head) -> HeadIdx {
        match head {
            Head::King => self.king,
            Head::Visibility => self.vis,
        }
    }

    pub fn head_range(&self, head: Head) -> std::ops::Range<usize> {
        let h = self.head(head);
        h.w_1..h.b_2 + self.dims.outputs
    }
}

/// Flat parameters plus their layout.
#[derive(Debug, Clone)]
pub struct TransformerParams {
    pub layout: Layout,
    pub data: Vec<f32>,
}

/// Keys and values of committed positions, per layer.
#[derive(Debug, Clone)]
pub struct TrunkCache {
    len: usize,
    keys: Vec<Vec<f32>>,
    values: Vec<Vec<f32>>,
}

impl TrunkCache {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Result of running one token through the trunk against a cache.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub representation: Vec<f32>,
    keys: Vec<Vec<f32>>,
    values: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SequenceError {
    #[error("sequence position {0} exceeds the model's maximum length {1}")]
    TooLong(usize, usize),
    #[error("token has {0} values, model expects {1}")]
    TokenWidth(usize, usize),
}

impl TransformerParams {
    pub fn init(dims: ModelDims, seed: u64) -> TransformerParams {
        let layout = Layout::new(dims);
        let mut data = vec![0.0f32; layout.total];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (d, f) = (dims.width, dims.ffn);
        glorot(&mut rng, &mut data[layout.w_in..layout.w_in + dims.input * d], dims.input, d, 1.0);
        glorot(&mut rng, &mut data[layout.pos..layout.pos + dims.max_len * d], 1, 1, 0.02 / 6f32.sqrt());
        for l in &layout.layers {
            data[l.ln1_g..l.ln1_g + d].fill(1.0);
            data[l.ln2_g..l.ln2_g + d].fill(1.0);
            glorot(&mut rng, &mut data[l.w_qkv..l.w_qkv + 3 * d * d], d, d, 1.0);
            glorot(&mut rng, &mut data[l.w_o..l.w_o + d * d], d, d, 1.0);
            glorot(&mut rng, &mut data[l.w_1..l.w_1 + f * d], d, f, 1.0);
            glorot(&mut rng, &mut data[l.w_2..l.w_2 + d * f], f, d, 1.0);
        }
        data[layout.lnf_g..layout.lnf_g + d].fill(1.0);
        for h in [layout.king, layout.vis] {
            let hh = dims.head_hidden;
            glorot(&mut rng, &mut data[h.w_1..h.w_1 + hh * d], d, hh, 1.0);
            glorot(&mut rng, &mut data[h.w_2..h.w_2 + dims.outputs * hh], hh, dims.outputs, 0.5);
        }
        TransformerParams { layout, data }
    }

    pub fn dims(&self) -> &ModelDims {
        &self.layout.dims
    }

    pub fn trunk(&self) -> &[f32] {
        &self.data[..self.layout.trunk_len]
    }

    /// Zeroes one head so it emits all-zero logits.
    pub fn zero_head(&mut self, head: Head) {
        let r = self.layout.head_range(head);
        self.data[r].fill(0.0);
    }

    #[inline]
    fn p(&self, off: usize, len: usize) -> &[f32] {
        &self.data[off..off + len]
    }

    pub fn new_cache(&self) -> TrunkCache {
        let n = self.layout.dims.layers;
        TrunkCache { len: 0, keys: vec![Vec::new(); n], values: vec![Vec::new(); n] }
    }

    /// Runs one token at position `cache.len()` without modifying the cache.
    pub fn step(&self, cache: &TrunkCache, token: &[f32]) -> Result<StepOutput, SequenceError> {
        let dims = self.layout.dims;
        let (d, nh) = (dims.width, dims.heads);
        let dh = d / nh;
        if token.len() != dims.input {
            return Err(SequenceError::TokenWidth(token.len(), dims.input));
        }
        if cache.len >= dims.max_len {
            return Err(SequenceError::TooLong(cache.len, dims.max_len));
        }
        let mut h = vec![0.0f32; d];
        h.copy_from_slice(self.p(self.layout.b_in, d));
        axpy(1.0, self.p(self.layout.pos + cache.len * d, d), &mut h);
        for (i, &x) in token.iter().enumerate() {
            if x != 0.0 {
                axpy(x, self.p(self.layout.w_in + i * d, d), &mut h);
            }
        }
        let scale = 1.0 / (dh as f32).sqrt();
        let mut keys = Vec::with_capacity(dims.layers);
        let mut values = Vec::with_capacity(dims.layers);
        let mut a = vec![0.0f32; d];
        let mut qkv = vec![0.0f32; 3 * d];
        let mut o = vec![0.0f32; d];
        let mut proj = vec![0.0f32; d];
        let mut u = vec![0.0f32; dims.ffn];
        let mut scores = vec![0.0f32; cache.len + 1];
        for (li, l) in self.layout.layers.iter().enumerate() {
            layer_norm_row(&h, self.p(l.ln1_g, d), self.p(l.ln1_b, d), &mut a);
            matvec(self.p(l.w_qkv, 3 * d * d), self.p(l.b_qkv, 3 * d), &a, &mut qkv);
            let (q, kv) = qkv.split_at(d);
            let (k_new, v_new) = kv.split_at(d);
            let past_k = &cache.keys[li];
            let past_v = &cache.values[li];
            for head in 0..nh {
                let hs = head * dh..(head + 1) * dh;
                for j in 0..cache.len {
                    scores[j] = dot(&q[hs.clone()], &past_k[j * d + hs.start..j * d + hs.end]) * scale;
                }
                scores[cache.len] = dot(&q[hs.clone()], &k_new[hs.clone()]) * scale;
                softmax_in_place(&mut scores);
                let out = &mut o[hs.clone()];
                out.fill(0.0);
                for j in 0..cache.len {
                    axpy(scores[j], &past_v[j * d + hs.start..j * d + hs.end], out);
                }
                axpy(scores[cache.len], &v_new[hs.clone()], out);
            }
            matvec(self.p(l.w_o, d * d), self.p(l.b_o, d), &o, &mut proj);
            axpy(1.0, &proj, &mut h);
            layer_norm_row(&h, self.p(l.ln2_g, d), self.p(l.ln2_b, d), &mut a);
            matvec(self.p(l.w_1, dims.ffn * d), self.p(l.b_1, dims.ffn), &a, &mut u);
            for x in u.iter_mut() {
                *x = x.max(0.0);
            }
            matvec(self.p(l.w_2, d * dims.ffn), self.p(l.b_2, d), &u, &mut proj);
            axpy(1.0, &proj, &mut h);
            keys.push(k_new.to_vec());
            values.push(v_new.to_vec());
        }
        let mut z = vec![0.0f32; d];
        layer_norm_row(&h, self.p(self.layout.lnf_g, d), self.p(self.layout.lnf_b, d), &mut z);
        Ok(StepOutput { representation: z, keys, values })
    }

    /// Appends a stepped token's keys and values to the cache.
    pub fn commit(&self, cache: &mut TrunkCache, out: &StepOutput) {
        for (li, (k, v)) in out.keys.iter().zip(&out.values).enumerate() {
            cache.keys[li].extend_from_slice(k);
            cache.values[li].extend_from_slice(v);
        }
        cache.len += 1;
    }

    /// Representation of the last token of `tokens`, computed from scratch.
    pub fn encode_last(&self, tokens: &[&[f32]]) -> Result<Vec<f32>, SequenceError> {
        let mut cache = self.new_cache();
        let mut last = Vec::new();
        for (i, tok) in tokens.iter().enumerate() {
            let out = self.step(&cache, tok)?;
            if i + 1 < tokens.len() {
                self.commit(&mut cache, &out);
            }
            last = out.representation;
        }
        Ok(last)
    }

    /// Output logits of `head` for one representation vector.
    pub fn head_logits(&self, head: Head, representation: &[f32]) -> Vec<f32> {
        let dims = self.layout.dims;
        let idx = self.layout.head(head);
        let (d, hh) = (dims.width, dims.head_hidden);
        let mut hidden = vec![0.0f32; hh];
        matvec(self.p(idx.w_1, hh * d), self.p(idx.b_1, hh), representation, &mut hidden);
        for x in hidden.iter_mut() {
            *x = x.max(0.0);
        }
        let mut logits = vec![0.0f32; dims.outputs];
        matvec(self.p(idx.w_2, dims.outputs * hh), self.p(idx.b_2, dims.outputs), &hidden, &mut logits);
        logits
    }

    /// Full-sequence forward pass keeping the activations needed for backprop.
    pub fn forward(&self, tokens: &[&[f32]]) -> Result<Forward, SequenceError> {
        self.forward_impl(tokens, None)
    }

    /// Training-mode forward pass with inverted dropout at rate `p` on the
    /// input features, the attention output, the FFN hidden activation and
    /// the FFN output.
    pub fn forward_train(&self, tokens: &[&[f32]], p: f32, rng: &mut dyn RngCore) -> Result<Forward, SequenceError> {
        self.forward_impl(tokens, Some((p, rng)))
    }

    fn forward_impl(&self, tokens: &[&[f32]], mut dropout: Option<(f32, &mut dyn RngCore)>) -> Result<Forward, SequenceError> {
        let dims = self.layout.dims;
        let (t, d, n_in, ff) = (tokens.len(), dims.width, dims.input, dims.ffn);
        if t > dims.max_len {
            return Err(SequenceError::TooLong(t, dims.max_len));
        }
        let mut x = vec![0.0f32; t * n_in];
        for (r, tok) in tokens.iter().enumerate() {
            if tok.len() != n_in {
                return Err(SequenceError::TokenWidth(tok.len(), n_in));
            }
            x[r * n_in..(r + 1) * n_in].copy_from_slice(tok);
        }
        if let Some((p, rng)) = dropout.as_mut() {
            mul_assign(&mut x, &dropout_mask(t * n_in, *p, &mut **rng));
        }
        let mut h = vec![0.0f32; t * d];
        gemm(t, n_in, d, &x, (n_in, 1), self.p(self.layout.w_in, n_in * d), (d, 1), 0.0, &mut h, d);
        for r in 0..t {
            let row = &mut h[r * d..(r + 1) * d];
            axpy(1.0, self.p(self.layout.b_in, d), row);
            axpy(1.0, self.p(self.layout.pos + r * d, d), row);
        }
        let mut layers = Vec::with_capacity(dims.layers);
        for l in &self.layout.layers {
            let mut c = LayerCache::new(t, d, ff, dims.heads);
            c.x_in.copy_from_slice(&h);
            layer_norm_fwd(&h, t, d, self.p(l.ln1_g, d), self.p(l.ln1_b, d), &mut c.a, &mut c.xhat1, &mut c.rstd1);
            linear_fwd(&c.a, t, d, 3 * d, self.p(l.w_qkv, 3 * d * d), self.p(l.b_qkv, 3 * d), &mut c.qkv);
            attention_fwd(&c.qkv, t, d, dims.heads, &mut c.probs, &mut c.attn);
            linear_fwd(&c.attn, t, d, d, self.p(l.w_o, d * d), self.p(l.b_o, d), &mut c.h1);
            if let Some((p, rng)) = dropout.as_mut() {
                c.drop_attn = dropout_mask(t * d, *p, &mut **rng);
                mul_assign(&mut c.h1, &c.drop_attn);
            }
            axpy(1.0, &h, &mut c.h1);
            layer_norm_fwd(&c.h1, t, d, self.p(l.ln2_g, d), self.p(l.ln2_b, d), &mut c.f, &mut c.xhat2, &mut c.rstd2);
            linear_fwd(&c.f, t, d, ff, self.p(l.w_1, ff * d), self.p(l.b_1, ff), &mut c.u);
            for (r, u) in c.r.iter_mut().zip(&c.u) {
                *r = u.max(0.0);
            }
            if let Some((p, rng)) = dropout.as_mut() {
                c.drop_ff = dropout_mask(t * ff, *p, &mut **rng);
                mul_assign(&mut c.r, &c.drop_ff);
            }
            linear_fwd(&c.r, t, ff, d, self.p(l.w_2, d * ff), self.p(l.b_2, d), &mut h);
            if let Some((p, rng)) = dropout.as_mut() {
                c.drop_out = dropout_mask(t * d, *p, &mut **rng);
                mul_assign(&mut h, &c.drop_out);
            }
            axpy(1.0, &c.h1, &mut h);
            layers.push(c);
        }
        let mut z = vec![0.0f32; t * d];
        let mut xhatf = vec![0.0f32; t * d];
        let mut rstdf = vec![0.0f32; t];
        layer_norm_fwd(&h, t, d, self.p(self.layout.lnf_g, d), self.p(self.layout.lnf_b, d), &mut z, &mut xhatf, &mut rstdf);
        let king = self.head_fwd(self.layout.king, &z, t);
        let vis = self.head_fwd(self.layout.vis, &z, t);
        Ok(Forward { t, x, layers, xhatf, rstdf, z, king, vis })
    }

    fn head_fwd(&self, idx: HeadIdx, z: &[f32], t: usize) -> HeadCache {
        let dims = self.layout.dims;
        let (d, hh, out) = (dims.width, dims.head_hidden, dims.outputs);
        let mut pre = vec![0.0f32; t * hh];
        linear_fwd(z, t, d, hh, self.p(idx.w_1, hh * d), self.p(idx.b_1, hh), &mut pre);
        let hidden: Vec<f32> = pre.iter().map(|v| v.max(0.0)).collect();
        let mut logits = vec![0.0f32; t * out];
        linear_fwd(&hidden, t, hh, out, self.p(idx.w_2, out * hh), self.p(idx.b_2, out), &mut logits);
        HeadCache { pre, hidden, logits }
    }

    /// Accumulates parameter gradients into `grad` given logit gradients
    /// (`t x outputs` each). Pass `train_trunk = false` to stop at the heads.
    pub fn backward(&self, fwd: &Forward, d_king: &[f32], d_vis: &[f32], grad: &mut [f32], train_trunk: bool) {
        let dims = self.layout.dims;
        let (t, d, ff, n_in) = (fwd.t, dims.width, dims.ffn, dims.input);
        assert_eq!(grad.len(), self.layout.total);
        let mut dz = vec![0.0f32; t * d];
        self.head_bwd(self.layout.king, &fwd.king, &fwd.z, d_king, t, grad, &mut dz);
        self.head_bwd(self.layout.vis, &fwd.vis, &fwd.z, d_vis, t, grad, &mut dz);
        if !train_trunk {
            return;
        }
        let mut dh = vec![0.0f32; t * d];
        {
            let (lo, hi) = grad.split_at_mut(self.layout.lnf_b);
            layer_norm_bwd(
                &dz,
                &fwd.xhatf,
                &fwd.rstdf,
                t,
                d,
                self.p(self.layout.lnf_g, d),
                &mut dh,
                &mut lo[self.layout.lnf_g..self.layout.lnf_g + d],
                &mut hi[..d],
            );
        }
        let mut tmp_d = vec![0.0f32; t * d];
        let mut d_ff = vec![0.0f32; t * ff];
        let mut d_qkv = vec![0.0f32; t * 3 * d];
        let mut d_attn = vec![0.0f32; t * d];
        for (l, c) in self.layout.layers.iter().zip(&fwd.layers).rev() {
            // h_out = h1 + ffn(ln2(h1))
            let mut d_branch = dh.clone();
            mul_assign(&mut d_branch, &c.drop_out);
            linear_bwd(&d_branch, &c.r, t, ff, d, self.p(l.w_2, d * ff), Some(&mut d_ff), grad, l.w_2, l.b_2);
            mul_assign(&mut d_ff, &c.drop_ff);
            for (g, u) in d_ff.iter_mut().zip(&c.u) {
                if *u <= 0.0 {
                    *g = 0.0;
                }
            }
            linear_bwd(&d_ff, &c.f, t, d, ff, self.p(l.w_1, ff * d), Some(&mut tmp_d), grad, l.w_1, l.b_1);
            let mut dh1 = dh.clone();
            {
                let (lo, hi) = grad.split_at_mut(l.ln2_b);
                let mut dx = vec![0.0f32; t * d];
                layer_norm_bwd(&tmp_d, &c.xhat2, &c.rstd2, t, d, self.p(l.ln2_g, d), &mut dx, &mut lo[l.ln2_g..l.ln2_g + d], &mut hi[..d]);
                axpy(1.0, &dx, &mut dh1);
            }
            // h1 = x_in + attn(ln1(x_in))
            let mut d_branch = dh1.clone();
            mul_assign(&mut d_branch, &c.drop_attn);
            linear_bwd(&d_branch, &c.attn, t, d, d, self.p(l.w_o, d * d), Some(&mut d_attn), grad, l.w_o, l.b_o);
            attention_bwd(&c.qkv, &c.probs, &d_attn, t, d, dims.heads, &mut d_qkv);
            linear_bwd(&d_qkv, &c.a, t, d, 3 * d, self.p(l.w_qkv, 3 * d * d), Some(&mut tmp_d), grad, l.w_qkv, l.b_qkv);
            {
                let (lo, hi) = grad.split_at_mut(l.ln1_b);
                layer_norm_bwd(&tmp_d, &c.xhat1, &c.rstd1, t, d, self.p(l.ln1_g, d), &mut dh, &mut lo[l.ln1_g..l.ln1_g + d], &mut hi[..d]);
            }
            axpy(1.0, &dh1, &mut dh);
        }
        // Embedding: h0 = x W_in + b_in + pos.
        let w_in = self.layout.w_in;
        gemm(n_in, t, d, &fwd.x, (1, n_in), &dh, (d, 1), 1.0, &mut grad[w_in..w_in + n_in * d], d);
        for r in 0..t {
            let row = &dh[r * d..(r + 1) * d];
            axpy(1.0, row, &mut grad[self.layout.b_in..self.layout.b_in + d]);
            let p = self.layout.pos + r * d;
            axpy(1.0, row, &mut grad[p..p + d]);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn head_bwd(&self, idx: HeadIdx, cache: &HeadCache, z: &[f32], d_logits: &[f32], t: usize, grad: &mut [f32], dz: &mut [f32]) {
        let dims = self.layout.dims;
        let (d, hh, out) = (dims.width, dims.head_hidden, dims.outputs);
        let mut d_hidden = vec![0.0f32; t * hh];
        linear_bwd(d_logits, &cache.hidden, t, hh, out, self.p(idx.w_2, out * hh), Some(&mut d_hidden), grad, idx.w_2, idx.b_2);
        for (g, p) in d_hidden.iter_mut().zip(&cache.pre) {
            if *p <= 0.0 {
                *g = 0.0;
            }
        }
        let mut dz_part = vec![0.0f32; t * d];
        linear_bwd(&d_hidden, z, t, d, hh, self.p(idx.w_1, hh * d), Some(&mut dz_part), grad, idx.w_1, idx.b_1);
        axpy(1.0, &dz_part, dz);
    }
}

struct LayerCache {
    x_in: Vec<f32>,
    a: Vec<f32>,
    xhat1: Vec<f32>,
    rstd1: Vec<f32>,
    qkv: Vec<f32>,
    probs: Vec<f32>,
    attn: Vec<f32>,
    h1: Vec<f32>,
    f: Vec<f32>,
    xhat2: Vec<f32>,
    rstd2: Vec<f32>,
    u: Vec<f32>,
    r: Vec<f32>,
    // Dropout multipliers; empty when dropout is off.
    drop_attn: Vec<f32>,
    drop_ff: Vec<f32>,
    drop_out: Vec<f32>,
}

impl LayerCache {
    fn new(t: usize, d: usize, ff: usize, heads: usize) -> LayerCache {
        LayerCache {
            x_in: vec![0.0; t * d],
            a: vec![0.0; t * d],
            xhat1: vec![0.0; t * d],
            rstd1: vec![0.0; t],
            qkv: vec![0.0; t * 3 * d],
            probs: vec![0.0; heads * t * t],
            attn: vec![0.0; t * d],
            h1: vec![0.0; t * d],
            f: vec![0.0; t * d],
            xhat2: vec![0.0; t * d],
            rstd2: vec![0.0; t],
            u: vec![0.0; t * ff],
            r: vec![0.0; t * ff],
            drop_attn: Vec::new(),
            drop_ff: Vec::new(),
            drop_out: Vec::new(),
        }
    }
}

/// Inverted-dropout multipliers: 0 with probability `p`, else `1 / (1 - p)`.
fn dropout_mask(len: usize, p: f32, rng: &mut dyn RngCore) -> Vec<f32> {
    let keep = 1.0 / (1.0 - p);
    (0..len).map(|_| if rng.gen::<f32>() < p { 0.0 } else { keep }).collect()
}

/// Elementwise `x *= m`; an empty `m` leaves `x` unchanged.
fn mul_assign(x: &mut [f32], m: &[f32]) {
    if !m.is_empty() {
        for (v, k) in x.iter_mut().zip(m) {
            *v *= k;
        }
    }
}

struct HeadCache {
    pre: Vec<f32>,
    hidden: Vec<f32>,
    logits: Vec<f32>,
}

/// Saved activations of one full-sequence pass.
pub struct Forward {
    t: usize,
    x: Vec<f32>,
    layers: Vec<LayerCache>,
    xhatf: Vec<f32>,
    rstdf: Vec<f32>,
    z: Vec<f32>,
    king: HeadCache,
    vis: HeadCache,
}

impl Forward {
    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    /// Trunk representation of every position, `t x width`.
    pub fn representations(&self) -> &[f32] {
        &self.z
    }

    pub fn logits(&self, head: Head) -> &[f32] {
        match head {
            Head::King => &self.king.logits,
            Head::Visibility => &self.vis.logits,
        }
    }
}

fn softmax_in_place(x: &mut [f32]) {
    let max = x.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

fn layer_norm_row(x: &[f32], g: &[f32], b: &[f32], out: &mut [f32]) {
    let n = x.len() as f32;
    let mean = x.iter().sum::<f32>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
    let rstd = 1.0 / (var + LN_EPS).sqrt();
    for i in 0..x.len() {
        out[i] = (x[i] - mean) * rstd * g[i] + b[i];
    }
}

#[allow(clippy::too_many_arguments)]
fn layer_norm_fwd(x: &[f32], rows: usize, d: usize, g: &[f32], b: &[f32], y: &mut [f32], xhat: &mut [f32], rstd: &mut [f32]) {
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f32>() / d as f32;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for i in 0..d {
            let xh = (row[i] - mean) * rs;
            xhat[r * d + i] = xh;
            y[r * d + i] = xh * g[i] + b[i];
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn layer_norm_bwd(
    dy: &[f32],
    xhat: &[f32],
    rstd: &[f32],
    rows: usize,
    d: usize,
    g: &[f32],
    dx: &mut [f32],
    dg: &mut [f32],
    db: &mut [f32],
) {
    let mut dxhat = vec![0.0f32; d];
    for r in 0..rows {
        let (dyr, xh) = (&dy[r * d..(r + 1) * d], &xhat[r * d..(r + 1) * d]);
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for i in 0..d {
            dxhat[i] = dyr[i] * g[i];
            m1 += dxhat[i];
            m2 += dxhat[i] * xh[i];
            dg[i] += dyr[i] * xh[i];
            db[i] += dyr[i];
        }
        m1 /= d as f32;
        m2 /= d as f32;
        for i in 0..d {
            dx[r * d + i] = rstd[r] * (dxhat[i] - m1 - xh[i] * m2);
        }
    }
}

/// `y = x W^T + b` with `W` stored `[n_out, n_in]`.
fn linear_fwd(x: &[f32], rows: usize, n_in: usize, n_out: usize, w: &[f32], b: &[f32], y: &mut [f32]) {
    gemm(rows, n_in, n_out, x, (n_in, 1), w, (1, n_in), 0.0, y, n_out);
    for r in 0..rows {
        axpy(1.0, b, &mut y[r * n_out..(r + 1) * n_out]);
    }
}

/// Accumulates `dW += dy^T x` and `db += sum(dy)`; overwrites `dx = dy W`.
#[allow(clippy::too_many_arguments)]
fn linear_bwd(
    dy: &[f32],
    x: &[f32],
    rows: usize,
    n_in: usize,
    n_out: usize,
    w: &[f32],
    dx: Option<&mut [f32]>,
    grad: &mut [f32],
    w_off: usize,
    b_off: usize,
) {
    gemm(n_out, rows, n_in, dy, (1, n_out), x, (n_in, 1), 1.0, &mut grad[w_off..w_off + n_out * n_in], n_in);
    let db = &mut grad[b_off..b_off + n_out];
    for r in 0..rows {
        axpy(1.0, &dy[r * n_out..(r + 1) * n_out], db);
    }
    if let Some(dx) = dx {
        gemm(rows, n_out, n_in, dy, (n_out, 1), w, (n_in, 1), 0.0, dx, n_in);
    }
}

fn attention_fwd(qkv: &[f32], t: usize, d: usize, heads: usize, probs: &mut [f32], out: &mut [f32]) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f32).sqrt();
    let stride = 3 * d;
    out.fill(0.0);
    for h in 0..heads {
        let off = h * dh;
        for i in 0..t {
            let q = &qkv[i * stride + off..i * stride + off + dh];
            let p = &mut probs[h * t * t + i * t..h * t * t + i * t + i + 1];
            for (j, pj) in p.iter_mut().enumerate() {
                *pj = dot(q, &qkv[j * stride + d + off..j * stride + d + off + dh]) * scale;
            }
            softmax_in_place(p);
            let o = &mut out[i * d + off..i * d + off + dh];
            for (j, &pj) in p.iter().enumerate() {
                axpy(pj, &qkv[j * stride + 2 * d + off..j * stride + 2 * d + off + dh], o);
            }
        }
    }
}

fn attention_bwd(qkv: &[f32], probs: &[f32], d_out: &[f32], t: usize, d: usize, heads: usize, d_qkv: &mut [f32]) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f32).sqrt();
    let stride = 3 * d;
    d_qkv.fill(0.0);
    let mut dp = vec![0.0f32; t];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..t {
            let p = &probs[h * t * t + i * t..h * t * t + i * t + i + 1];
            let dout = &d_out[i * d + off..i * d + off + dh];
            let mut weighted = 0.0;
            for j in 0..=i {
                dp[j] = dot(dout, &qkv[j * stride + 2 * d + off..j * stride + 2 * d + off + dh]);
                weighted += p[j] * dp[j];
                axpy(p[j], dout, &mut d_qkv[j * stride + 2 * d + off..j * stride + 2 * d + off + dh]);
            }
            for j in 0..=i {
                let ds = p[j] * (dp[j] - weighted) * scale;
                if ds == 0.0 {
                    continue;
                }
                // dq_i += ds k_j ; dk_j += ds q_i
                for c in 0..dh {
                    let kj = qkv[j * stride + d + off + c];
                    let qi = qkv[i * stride + off + c];
                    d_qkv[i * stride + off + c] += ds * kj;
                    d_qkv[j * stride + d + off + c] += ds * qi;
                }
            }
        }
    }
}
