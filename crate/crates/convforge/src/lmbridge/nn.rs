//! Minimal dense-layer numerics for the tiny backends: parameter store,
//! Adam, softmax helpers. Everything is f64 and single-threaded so runs
//! are bit-reproducible.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A named parameter matrix with its Adam state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Param {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
    m: Array2<f64>,
    v: Array2<f64>,
}

impl Param {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Param {
            value: Array2::zeros((rows, cols)),
            grad: Array2::zeros((rows, cols)),
            m: Array2::zeros((rows, cols)),
            v: Array2::zeros((rows, cols)),
        }
    }

    /// Uniform init in [-scale, scale].
    pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(rows, cols);
        for x in p.value.iter_mut() {
            *x = rng.gen_range(-scale..scale);
        }
        p
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Adam optimizer over a set of parameters. The step counter lives here so
/// bias correction survives across finetune calls.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Adam {
    pub steps: u64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;

    /// Applies one update to every parameter, with global-norm gradient
    /// clipping and linear warmup on the learning rate.
    pub fn step(
        &mut self,
        params: &mut [&mut Param],
        lr: f64,
        eps: f64,
        max_grad_norm: f64,
        warmup_steps: u64,
    ) {
        self.steps += 1;
        let warm = if warmup_steps > 0 {
            (self.steps as f64 / warmup_steps as f64).min(1.0)
        } else {
            1.0
        };
        let lr = lr * warm;

        let norm: f64 = params
            .iter()
            .map(|p| p.grad.iter().map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        let clip = if max_grad_norm > 0.0 && norm > max_grad_norm {
            max_grad_norm / norm
        } else {
            1.0
        };

        let bc1 = 1.0 - Self::BETA1.powi(self.steps as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.steps as i32);
        for p in params.iter_mut() {
            for (((x, g), m), v) in p
                .value
                .iter_mut()
                .zip(p.grad.iter())
                .zip(p.m.iter_mut())
                .zip(p.v.iter_mut())
            {
                let g = g * clip;
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *x -= lr * mhat / (vhat.sqrt() + eps);
            }
            p.zero_grad();
        }
    }
}

pub fn log_softmax_row(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    logits.mapv(|x| x - lse)
}

pub fn softmax_row(logits: &Array1<f64>) -> Array1<f64> {
    log_softmax_row(logits).mapv(f64::exp)
}

/// Row-wise log-softmax of a logits matrix.
pub fn log_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
        row.mapv_inplace(|x| x - lse);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax_row(&array![1.0, 2.0, 3.0]);
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = Param::uniform(1, 1, 1.0, &mut rng);
        let mut opt = Adam::default();
        for _ in 0..500 {
            let x = p.value[[0, 0]];
            p.grad[[0, 0]] = 2.0 * (x - 3.0);
            opt.step(&mut [&mut p], 0.05, 1e-8, 0.0, 0);
        }
        assert!((p.value[[0, 0]] - 3.0).abs() < 1e-2);
    }
}
