//! Two-layer ReLU network with a scalar output, used to score candidate moves.

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{dot, gemm, glorot, matvec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarMlp {
    pub input: usize,
    pub hidden: usize,
    /// `w1 [hidden, input]`, `b1 [hidden]`, `w2 [hidden]`, `b2 [1]`, flattened.
    pub data: Vec<f32>,
}

/// Activations of a batch forward pass.
#[derive(Debug, Clone)]
pub struct MlpForward {
    rows: usize,
    x: Vec<f32>,
    pre: Vec<f32>,
    pub scores: Vec<f32>,
}

impl ScalarMlp {
    /// Glorot-initialized hidden layer and an all-zero output layer, so the
    /// initial scores are identical for every input.
    pub fn init(input: usize, hidden: usize, seed: u64) -> ScalarMlp {
        let mut data = vec![0.0f32; hidden * input + 2 * hidden + 1];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        glorot(&mut rng, &mut data[..hidden * input], input, hidden, 1.0);
        ScalarMlp { input, hidden, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let w1 = self.hidden * self.input;
        (w1, w1 + self.hidden, w1 + 2 * self.hidden)
    }

    pub fn score(&self, x: &[f32]) -> f32 {
        let (b1, w2, b2) = self.offsets();
        let mut h = vec![0.0f32; self.hidden];
        matvec(&self.data[..b1], &self.data[b1..w2], x, &mut h);
        for v in h.iter_mut() {
            *v = v.max(0.0);
        }
        dot(&self.data[w2..b2], &h) + self.data[b2]
    }

    /// Scores `rows` inputs stored row-major in `x`.
    pub fn forward(&self, x: &[f32], rows: usize) -> MlpForward {
        assert_eq!(x.len(), rows * self.input);
        let (b1, w2, b2) = self.offsets();
        let (n_in, nh) = (self.input, self.hidden);
        let mut pre = vec![0.0f32; rows * nh];
        gemm(rows, n_in, nh, x, (n_in, 1), &self.data[..b1], (1, n_in), 0.0, &mut pre, nh);
        let mut scores = vec![0.0f32; rows];
        let mut h = vec![0.0f32; nh];
        for r in 0..rows {
            for j in 0..nh {
                pre[r * nh + j] += self.data[b1 + j];
                h[j] = pre[r * nh + j].max(0.0);
            }
            scores[r] = dot(&self.data[w2..b2], &h) + self.data[b2];
        }
        MlpForward { rows, x: x.to_vec(), pre, scores }
    }

    /// Accumulates parameter gradients for score gradients `d_scores`.
    pub fn backward(&self, fwd: &MlpForward, d_scores: &[f32], grad: &mut [f32]) {
        assert_eq!(d_scores.len(), fwd.rows);
        assert_eq!(grad.len(), self.data.len());
        let (b1, w2, b2) = self.offsets();
        let (n_in, nh) = (self.input, self.hidden);
        let mut d_pre = vec![0.0f32; fwd.rows * nh];
        for r in 0..fwd.rows {
            let ds = d_scores[r];
            grad[b2] += ds;
            for j in 0..nh {
                let p = fwd.pre[r * nh + j];
                if p > 0.0 {
                    grad[w2 + j] += ds * p;
                    d_pre[r * nh + j] = ds * self.data[w2 + j];
                    grad[b1 + j] += d_pre[r * nh + j];
                }
            }
        }
        gemm(nh, fwd.rows, n_in, &d_pre, (1, nh), &fwd.x, (n_in, 1), 1.0, &mut grad[..b1], n_in);
    }
}
