//! Small dense neural-network toolkit: row-major f32 kernels, a causal
//! transformer encoder with hand-written backprop, a scalar MLP scorer and Adam.

pub mod bundle;
pub mod mlp;
pub mod transformer;

use rand::Rng;

/// `C = alpha * A B + beta * C` on strided row-major buffers.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |r: usize, rs: usize, cols: usize, cs: usize| (r - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(last(m, rsa, k, csa) < a.len(), "gemm: A out of bounds");
        assert!(last(k, rsb, n, csb) < b.len(), "gemm: B out of bounds");
    }
    assert!(last(m, rsc, n, 1) < c.len(), "gemm: C out of bounds");
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is exclusively borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// Dot product with a fixed summation order.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `out[o] = bias[o] + W[o, :] . x` for `W` stored `[out, in]`.
#[inline]
pub(crate) fn matvec(w: &[f32], bias: &[f32], x: &[f32], out: &mut [f32]) {
    let n_in = x.len();
    for (o, y) in out.iter_mut().enumerate() {
        *y = bias[o] + dot(&w[o * n_in..(o + 1) * n_in], x);
    }
}

#[inline]
pub(crate) fn axpy(alpha: f32, x: &[f32], y: &mut [f32]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Glorot-uniform fill.
pub(crate) fn glorot<R: Rng>(rng: &mut R, out: &mut [f32], fan_in: usize, fan_out: usize, gain: f32) {
    let a = gain * (6.0 / (fan_in + fan_out) as f32).sqrt();
    for w in out.iter_mut() {
        *w = rng.gen_range(-a..a);
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f32) -> Adam {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f32]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}
