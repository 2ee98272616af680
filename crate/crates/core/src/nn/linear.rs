use rand::Rng;

use super::{glorot, join, Module, NnError, Real, Slot, Tensor};

/// Fully connected layer `y = x·W + b` with `W: [in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<S = f32> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Real> Linear<S> {
    pub fn new<R: Rng>(rng: &mut R, input: usize, output: usize) -> Self {
        Linear {
            weight: glorot(rng, input, output),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Tensor::zeros(&[input, output]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn input_size(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_size(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        if x.shape().len() != 2 || x.cols() != self.input_size() {
            return Err(NnError::shape("linear", x.shape(), self.weight.shape()));
        }
        let mut y = x.matmul(&self.weight)?;
        let b = self.bias.data();
        for r in 0..y.rows() {
            for (v, &bv) in y.row_mut(r).iter_mut().zip(b) {
                *v = S::lit(v.f64() + bv.f64());
            }
        }
        Ok(y)
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Tensor<S>, dy: &Tensor<S>, grad: &mut Linear<S>) -> Result<Tensor<S>, NnError> {
        if dy.cols() != self.output_size() || dy.rows() != x.rows() {
            return Err(NnError::shape("linear backward", x.shape(), dy.shape()));
        }
        grad.weight.add_assign(&x.matmul_tn(dy)?);
        let n = self.output_size();
        let mut db = vec![0f64; n];
        for r in 0..dy.rows() {
            for (acc, &g) in db.iter_mut().zip(dy.row(r)) {
                *acc += g.f64();
            }
        }
        for (b, acc) in grad.bias.data_mut().iter_mut().zip(db) {
            *b = S::lit(b.f64() + acc);
        }
        dy.matmul_nt(&self.weight)
    }
}

impl<S: Real> Module<S> for Linear<S> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Slot, &'a Tensor<S>)>) {
        out.push((join(prefix, "weight"), Slot::Param, &self.weight));
        out.push((join(prefix, "bias"), Slot::Param, &self.bias));
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot, &'a mut Tensor<S>)>) {
        out.push((join(prefix, "weight"), Slot::Param, &mut self.weight));
        out.push((join(prefix, "bias"), Slot::Param, &mut self.bias));
    }
}
