use serde::{Deserialize, Serialize};

use super::{NnError, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// Moment estimates for every trainable tensor, in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S = f32> {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Tensor<S>>,
    pub second_moment: Vec<Tensor<S>>,
}

impl<S: Real> AdamState<S> {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    /// One bias-corrected update:
    /// `θ ← θ − lr · m̂ / (√v̂ + ε)` with `m̂ = m/(1−β₁ᵗ)`, `v̂ = v/(1−β₂ᵗ)`.
    pub fn step(&mut self, params: &mut [&mut Tensor<S>], grads: &[&Tensor<S>]) -> Result<(), NnError> {
        if params.len() != grads.len() {
            return Err(NnError::Shape(format!(
                "adam: {} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(NnError::shape("adam", p.shape(), g.shape()));
            }
        }
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| p.zeros_like()).collect();
            self.second_moment = params.iter().map(|p| p.zeros_like()).collect();
        } else if self.first_moment.len() != params.len()
            || self.first_moment.iter().zip(params.iter()).any(|(m, p)| m.shape() != p.shape())
        {
            return Err(NnError::Shape("adam: parameter layout changed between steps".into()));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first_moment[k].data_mut();
            let v = self.second_moment[k].data_mut();
            for (((pi, gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                let gf = gi.f64();
                let mf = b1 * mi.f64() + (1.0 - b1) * gf;
                let vf = b2 * vi.f64() + (1.0 - b2) * gf * gf;
                *mi = S::lit(mf);
                *vi = S::lit(vf);
                let update = lr * (mf / c1) / ((vf / c2).sqrt() + eps);
                *pi = S::lit(pi.f64() - update);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = Tensor::<f32>::vector(vec![1.0, -2.0, 3.5]);
        let g = Tensor::<f32>::zeros(&[3]);
        let mut state = AdamState::new(AdamConfig::default());
        for k in 1..=5 {
            state.step(&mut [&mut p], &[&g]).unwrap();
            assert_eq!(state.step, k);
        }
        assert_eq!(p.data(), [1.0, -2.0, 3.5]);
    }

    #[test]
    fn first_step_by_hand() {
        let mut p = Tensor::<f64>::vector(vec![1.0]);
        let g = Tensor::<f64>::vector(vec![0.5]);
        let mut state = AdamState::new(AdamConfig::default());
        state.step(&mut [&mut p], &[&g]).unwrap();
        // m̂ = 0.5, v̂ = 0.25
        assert_abs_diff_eq!(p.data()[0], 1.0 - 0.001 * 0.5 / (0.5 + 1e-7), epsilon = 1e-12);
        assert_abs_diff_eq!(p.data()[0], 0.999, epsilon = 1e-6);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = Tensor::<f32>::vector(vec![0.1, 0.2]);
            let mut state = AdamState::new(AdamConfig::default());
            for i in 0..10 {
                let g = Tensor::vector(vec![0.3 * i as f32, -0.01]);
                state.step(&mut [&mut p], &[&g]).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn shape_mismatch() {
        let mut p = Tensor::<f32>::zeros(&[2]);
        let g = Tensor::<f32>::zeros(&[3]);
        let mut state = AdamState::new(AdamConfig::default());
        assert!(state.step(&mut [&mut p], &[&g]).is_err());
        assert_eq!(state.step, 0);
    }
}
