//! Small differentiable kernel: dense tensors, hand-written forward/backward
//! passes for the layers the classifier needs, Adam, and a finite-difference
//! gradient checker.
//!
//! Layers are generic over the storage type. Training runs in `f32`; the
//! gradient checker instantiates the same code in `f64`.

mod adam;
mod batchnorm;
mod gradcheck;
mod linear;
mod loss;
mod rnn;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use batchnorm::{BatchNorm, BatchNormCache, DEFAULT_BN_EPSILON, DEFAULT_BN_MOMENTUM};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use linear::Linear;
pub use loss::{softmax, softmax_cross_entropy, CrossEntropy};
pub use rnn::{Gate, Gru, GruCache, Lstm, LstmCache, Rnn, RnnCache, RnnKind};
pub use tensor::{Real, Tensor};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("batch-norm training needs a batch of at least 2, got {0}")]
    BatchTooSmall(usize),
    #[error("sequence length {len} outside 1..={max}")]
    MaskOutOfRange { len: usize, max: usize },
    #[error("label {label} outside 0..{classes}")]
    BadLabel { label: usize, classes: usize },
    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),
}

impl NnError {
    pub(crate) fn shape(op: &str, a: &[usize], b: &[usize]) -> Self {
        NnError::Shape(format!("{op}: {a:?} vs {b:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Whether a tensor is updated by the optimizer or is a running statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Param,
    Buffer,
}

/// Named view over the tensors of a layer, in a fixed order.
pub trait Module<S: Real> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Slot, &'a Tensor<S>)>);
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot, &'a mut Tensor<S>)>);

    fn tensors(&self) -> Vec<(String, Slot, &Tensor<S>)> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, Slot, &mut Tensor<S>)> {
        let mut out = Vec::new();
        self.collect_mut("", &mut out);
        out
    }

    fn params(&self) -> Vec<&Tensor<S>> {
        self.tensors()
            .into_iter()
            .filter(|(_, s, _)| *s == Slot::Param)
            .map(|(_, _, t)| t)
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        self.tensors_mut()
            .into_iter()
            .filter(|(_, s, _)| *s == Slot::Param)
            .map(|(_, _, t)| t)
            .collect()
    }

    /// Number of trainable scalars.
    fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Trainable values concatenated in `collect` order.
    fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|t| t.to_f64_vec()).collect()
    }

    /// Inverse of `flat_params`.
    fn set_flat_params(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.params_mut() {
            let n = t.len();
            for (dst, &src) in t.data_mut().iter_mut().zip(&flat[offset..offset + n]) {
                *dst = S::lit(src);
            }
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Uniform Glorot initialization for a `[fan_in, fan_out]` matrix.
pub fn glorot<S: Real, R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor<S> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| S::lit(rng.gen_range(-limit..limit)))
        .collect();
    Tensor::from_vec(&[fan_in, fan_out], data).expect("shape matches data")
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise `max(0, x)`.
pub fn relu<S: Real>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| if v > S::zero() { v } else { S::zero() })
}

/// Gradient of `relu` given its output.
pub fn relu_backward<S: Real>(y: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(y.data()) {
        if v <= S::zero() {
            *d = S::zero();
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_examples() {
        let x = Tensor::<f32>::vector(vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), [0.0, 0.0, 2.0]);
        assert!(relu(&Tensor::<f32>::vector(vec![-3.0, -0.5])).data().iter().all(|&v| v == 0.0));
        let y = Tensor::<f32>::vector(vec![-2.0, 1.5, 0.25, -0.0]);
        assert_eq!(relu(&relu(&y)), relu(&y));
    }

    #[test]
    fn relu_backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut xs = Vec::new();
        while xs.len() < 20 {
            let v: f64 = rng.gen_range(-1.0..1.0);
            // keep away from the kink
            if v.abs() > 1e-2 {
                xs.push(v);
            }
        }
        let weights: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = |x: &[f64]| -> f64 {
            let t = Tensor::<f64>::vector(x.to_vec());
            relu(&t).data().iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let x = Tensor::<f64>::vector(xs.clone());
        let analytic = relu_backward(&relu(&x), &Tensor::vector(weights.clone())).to_f64_vec();
        let report = grad_check(f, &xs, &analytic, 1e-4).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn glorot_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w: Tensor<f32> = glorot(&mut rng, 10, 20);
        let limit = (6.0f32 / 30.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() < limit));
        assert_eq!(w.shape(), [10, 20]);
    }
}
