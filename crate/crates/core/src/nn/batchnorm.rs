use super::{join, Mode, Module, NnError, Real, Slot, Tensor};

pub const DEFAULT_BN_MOMENTUM: f64 = 0.99;
pub const DEFAULT_BN_EPSILON: f64 = 1e-3;

/// Per-feature batch normalization over a `[B, f]` input.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<S = f32> {
    pub gamma: Tensor<S>,
    pub beta: Tensor<S>,
    pub running_mean: Tensor<S>,
    pub running_var: Tensor<S>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Values saved by `forward` for `backward` and for the running-stat update.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    batch_stats: bool,
    features: usize,
}

impl BatchNormCache {
    /// Whether the forward pass normalized with batch statistics.
    pub fn used_batch_stats(&self) -> bool {
        self.batch_stats
    }
}

impl<S: Real> BatchNorm<S> {
    pub fn new(features: usize) -> Self {
        BatchNorm {
            gamma: Tensor::filled(&[features], S::one()),
            beta: Tensor::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::filled(&[features], S::one()),
            momentum: DEFAULT_BN_MOMENTUM,
            epsilon: DEFAULT_BN_EPSILON,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes `x`. Running statistics are left untouched; apply them with
    /// [`BatchNorm::update_running`] so the caller controls when they move.
    pub fn forward(&self, x: &Tensor<S>, mode: Mode) -> Result<(Tensor<S>, BatchNormCache), NnError> {
        let f = self.features();
        if x.shape().len() != 2 || x.cols() != f {
            return Err(NnError::shape("batchnorm", x.shape(), self.gamma.shape()));
        }
        let b = x.rows();
        let (mean, var, batch_stats) = match mode {
            Mode::Train => {
                if b < 2 {
                    return Err(NnError::BatchTooSmall(b));
                }
                let mut mean = vec![0f64; f];
                for r in 0..b {
                    for (m, v) in mean.iter_mut().zip(x.row(r)) {
                        *m += v.f64();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= b as f64);
                let mut var = vec![0f64; f];
                for r in 0..b {
                    for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                        let d = v.f64() - m;
                        *s += d * d;
                    }
                }
                var.iter_mut().for_each(|s| *s /= b as f64);
                (mean, var, true)
            }
            Mode::Infer => (
                self.running_mean.to_f64_vec(),
                self.running_var.to_f64_vec(),
                false,
            ),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let gamma = self.gamma.to_f64_vec();
        let beta = self.beta.to_f64_vec();
        let mut xhat = Vec::with_capacity(b * f);
        let mut y = Vec::with_capacity(b * f);
        for r in 0..b {
            for (j, v) in x.row(r).iter().enumerate() {
                let h = (v.f64() - mean[j]) * inv_std[j];
                xhat.push(h);
                y.push(S::lit(gamma[j] * h + beta[j]));
            }
        }
        let cache = BatchNormCache {
            xhat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
            batch_stats,
            features: f,
        };
        Ok((Tensor::from_vec(&[b, f], y)?, cache))
    }

    /// `running ← momentum·running + (1 − momentum)·batch`; no-op for
    /// caches produced with running statistics.
    pub fn update_running(&mut self, cache: &BatchNormCache) {
        if !cache.batch_stats {
            return;
        }
        let m = self.momentum;
        for (r, &bm) in self.running_mean.data_mut().iter_mut().zip(&cache.batch_mean) {
            *r = S::lit(m * r.f64() + (1.0 - m) * bm);
        }
        for (r, &bv) in self.running_var.data_mut().iter_mut().zip(&cache.batch_var) {
            *r = S::lit(m * r.f64() + (1.0 - m) * bv);
        }
    }

    /// Train-mode forward that also moves the running statistics.
    pub fn forward_train(&mut self, x: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let (y, cache) = self.forward(x, Mode::Train)?;
        self.update_running(&cache);
        Ok(y)
    }

    /// Accumulates `gamma`/`beta` gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, cache: &BatchNormCache, dy: &Tensor<S>, grad: &mut BatchNorm<S>) -> Result<Tensor<S>, NnError> {
        let f = cache.features;
        if dy.cols() != f || dy.len() != cache.xhat.len() {
            return Err(NnError::shape("batchnorm backward", dy.shape(), &[cache.xhat.len() / f.max(1), f]));
        }
        let b = dy.rows();
        let gamma = self.gamma.to_f64_vec();
        let mut dgamma = vec![0f64; f];
        let mut dbeta = vec![0f64; f];
        let mut sum_dxhat = vec![0f64; f];
        let mut sum_dxhat_xhat = vec![0f64; f];
        for r in 0..b {
            for (j, g) in dy.row(r).iter().enumerate() {
                let g = g.f64();
                let h = cache.xhat[r * f + j];
                dgamma[j] += g * h;
                dbeta[j] += g;
                let dxh = g * gamma[j];
                sum_dxhat[j] += dxh;
                sum_dxhat_xhat[j] += dxh * h;
            }
        }
        for (t, d) in grad.gamma.data_mut().iter_mut().zip(&dgamma) {
            *t = S::lit(t.f64() + d);
        }
        for (t, d) in grad.beta.data_mut().iter_mut().zip(&dbeta) {
            *t = S::lit(t.f64() + d);
        }
        let mut dx = Vec::with_capacity(b * f);
        for r in 0..b {
            for (j, g) in dy.row(r).iter().enumerate() {
                let dxh = g.f64() * gamma[j];
                let v = if cache.batch_stats {
                    let h = cache.xhat[r * f + j];
                    cache.inv_std[j] / b as f64 * (b as f64 * dxh - sum_dxhat[j] - h * sum_dxhat_xhat[j])
                } else {
                    dxh * cache.inv_std[j]
                };
                dx.push(S::lit(v));
            }
        }
        Tensor::from_vec(&[b, f], dx)
    }
}

impl<S: Real> Module<S> for BatchNorm<S> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Slot, &'a Tensor<S>)>) {
        out.push((join(prefix, "gamma"), Slot::Param, &self.gamma));
        out.push((join(prefix, "beta"), Slot::Param, &self.beta));
        out.push((join(prefix, "running_mean"), Slot::Buffer, &self.running_mean));
        out.push((join(prefix, "running_var"), Slot::Buffer, &self.running_var));
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot, &'a mut Tensor<S>)>) {
        out.push((join(prefix, "gamma"), Slot::Param, &mut self.gamma));
        out.push((join(prefix, "beta"), Slot::Param, &mut self.beta));
        out.push((join(prefix, "running_mean"), Slot::Buffer, &mut self.running_mean));
        out.push((join(prefix, "running_var"), Slot::Buffer, &mut self.running_var));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_sample_example() {
        let bn = BatchNorm::<f64>::new(1);
        let x = Tensor::from_vec(&[2, 1], vec![1.0, 3.0]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        let expected = 1.0 / (1.0f64 + 1e-3).sqrt();
        assert_abs_diff_eq!(y.data()[0], -expected, epsilon = 1e-6);
        assert_abs_diff_eq!(y.data()[1], expected, epsilon = 1e-6);
        assert_abs_diff_eq!(y.data()[1], 0.99950, epsilon = 1e-5);
    }

    #[test]
    fn zero_gamma_outputs_beta() {
        let mut bn = BatchNorm::<f64>::new(2);
        bn.gamma = Tensor::zeros(&[2]);
        bn.beta = Tensor::vector(vec![0.3, -0.7]);
        let x = Tensor::from_vec(&[3, 2], vec![1., 2., 5., -1., 0., 9.]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        for r in 0..3 {
            assert_eq!(y.row(r), [0.3, -0.7]);
        }
    }

    #[test]
    fn infer_mode_with_identity_stats() {
        let bn = BatchNorm::<f64>::new(3);
        let x = Tensor::from_vec(&[1, 3], vec![2.0, -1.0, 0.5]).unwrap();
        let (y, cache) = bn.forward(&x, Mode::Infer).unwrap();
        assert!(!cache.used_batch_stats());
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_abs_diff_eq!(*a, b / (1.0 + 1e-3f64).sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn train_mode_rejects_single_row() {
        let bn = BatchNorm::<f32>::new(2);
        assert_eq!(
            bn.forward(&Tensor::zeros(&[1, 2]), Mode::Train).unwrap_err(),
            NnError::BatchTooSmall(1)
        );
    }

    #[test]
    fn running_stats_update_rule() {
        let mut bn = BatchNorm::<f64>::new(1);
        let x = Tensor::from_vec(&[2, 1], vec![1.0, 3.0]).unwrap();
        bn.forward_train(&x).unwrap();
        assert_abs_diff_eq!(bn.running_mean.data()[0], 0.01 * 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bn.running_var.data()[0], 0.99 + 0.01 * 1.0, epsilon = 1e-12);
    }

    #[test]
    fn train_output_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = 4;
        let b = 8;
        let mut bn = BatchNorm::<f64>::new(f);
        bn.gamma = Tensor::vector((0..f).map(|_| rng.gen_range(-2.0..2.0)).collect());
        bn.beta = Tensor::vector((0..f).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let x = Tensor::from_f64(&[b, f], &(0..b * f).map(|_| rng.gen_range(-3.0..3.0)).collect::<Vec<_>>()).unwrap();
        let (y, cache) = bn.forward(&x, Mode::Train).unwrap();
        for j in 0..f {
            let col: Vec<f64> = (0..b).map(|r| y.at(r, j)).collect();
            let mean = col.iter().sum::<f64>() / b as f64;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / b as f64).sqrt();
            let var = cache.batch_var[j];
            let expected_std = bn.gamma.data()[j].abs() * (var / (var + bn.epsilon)).sqrt();
            assert_abs_diff_eq!(mean, bn.beta.data()[j], epsilon = 1e-5);
            assert_abs_diff_eq!(std, expected_std, epsilon = 1e-4);
        }
    }

    fn check_backward(mode: Mode) {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (b, f) = (6, 3);
        let mut bn = BatchNorm::<f64>::new(f);
        bn.gamma = Tensor::vector((0..f).map(|_| rng.gen_range(0.5..2.0)).collect());
        bn.beta = Tensor::vector((0..f).map(|_| rng.gen_range(-1.0..1.0)).collect());
        bn.running_mean = Tensor::vector((0..f).map(|_| rng.gen_range(-1.0..1.0)).collect());
        bn.running_var = Tensor::vector((0..f).map(|_| rng.gen_range(0.5..2.0)).collect());
        let xs: Vec<f64> = (0..b * f).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let proj: Vec<f64> = (0..b * f).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |bn: &BatchNorm<f64>, x: &[f64]| -> f64 {
            let (y, _) = bn.forward(&Tensor::from_f64(&[b, f], x).unwrap(), mode).unwrap();
            y.data().iter().zip(&proj).map(|(a, c)| a * c).sum()
        };
        let (_, cache) = bn.forward(&Tensor::from_f64(&[b, f], &xs).unwrap(), mode).unwrap();
        let mut grad = BatchNorm::<f64>::new(f);
        grad.gamma = Tensor::zeros(&[f]);
        let dx = bn.backward(&cache, &Tensor::from_f64(&[b, f], &proj).unwrap(), &mut grad).unwrap();

        let r = grad_check(|x| loss(&bn, x), &xs, &dx.to_f64_vec(), 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-4, "{mode:?} input {r:?}");
        let p0 = bn.flat_params();
        let fp = |p: &[f64]| {
            let mut m = bn.clone();
            m.set_flat_params(p);
            loss(&m, &xs)
        };
        let r = grad_check(fp, &p0, &grad.flat_params(), 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-4, "{mode:?} params {r:?}");
    }

    #[test]
    fn backward_matches_central_differences() {
        check_backward(Mode::Train);
        check_backward(Mode::Infer);
    }
}
