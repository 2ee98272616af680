use std::fmt;

use num_traits::Float;

use super::NnError;

/// Floating-point storage type. Reductions always accumulate in `f64`.
pub trait Real: Float + Default + fmt::Debug + fmt::Display + Send + Sync + 'static {
    fn lit(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn lit(v: f64) -> Self {
        v
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

/// Dense row-major tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor<S = f32> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: fmt::Debug> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, "{:?}", self.data)?;
        }
        Ok(())
    }
}

impl<S: Real> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::zero(); shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: S) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self, NnError> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(NnError::Shape(format!(
                "{} values do not fill shape {shape:?}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// 1-D tensor.
    pub fn vector(data: Vec<S>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self, NnError> {
        Self::from_vec(shape, data.iter().map(|&v| S::lit(v)).collect())
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Trailing dimension of a 2-D tensor.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn row(&self, r: usize) -> &[S] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn at(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols() + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<T: Real>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::lit(v.f64())).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.f64()).collect()
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Tensor<S>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    /// Sum of all elements accumulated in `f64`.
    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| v.f64()).sum()
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let (m, k) = (self.rows(), self.cols());
        if self.shape.len() != 2 || rhs.shape.len() != 2 || rhs.rows() != k {
            return Err(NnError::shape("matmul", &self.shape, &rhs.shape));
        }
        let n = rhs.cols();
        let mut out = Vec::with_capacity(m * n);
        let mut acc = vec![0f64; n];
        for i in 0..m {
            acc.iter_mut().for_each(|a| *a = 0.0);
            vec_mat_acc(self.row(i), &rhs.data, n, &mut acc);
            out.extend(acc.iter().map(|&a| S::lit(a)));
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `selfᵀ x rhs`: `[k, m]ᵀ x [k, n] -> [m, n]`.
    pub fn matmul_tn(&self, rhs: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let (k, m) = (self.rows(), self.cols());
        if self.shape.len() != 2 || rhs.shape.len() != 2 || rhs.rows() != k {
            return Err(NnError::shape("matmul_tn", &self.shape, &rhs.shape));
        }
        let n = rhs.cols();
        let mut acc = vec![0f64; m * n];
        for r in 0..k {
            outer_acc(self.row(r), rhs.row(r), &mut acc);
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: acc.into_iter().map(S::lit).collect(),
        })
    }

    /// `self x rhsᵀ`: `[m, k] x [n, k]ᵀ -> [m, n]`.
    pub fn matmul_nt(&self, rhs: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let (m, k) = (self.rows(), self.cols());
        if self.shape.len() != 2 || rhs.shape.len() != 2 || rhs.cols() != k {
            return Err(NnError::shape("matmul_nt", &self.shape, &rhs.shape));
        }
        let n = rhs.rows();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let a = self.row(i);
            for j in 0..n {
                out.push(S::lit(dot(a, rhs.row(j))));
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }
}

/// `acc[j] += Σ_k x[k] * w[k, j]` for a row-major `[x.len(), n]` matrix.
/// Zero entries of `x` are skipped, which keeps one-hot and multi-hot inputs cheap.
pub(crate) fn vec_mat_acc<S: Real>(x: &[S], w: &[S], n: usize, acc: &mut [f64]) {
    for (k, &xv) in x.iter().enumerate() {
        if xv == S::zero() {
            continue;
        }
        let xv = xv.f64();
        let wrow = &w[k * n..(k + 1) * n];
        for (a, &wv) in acc.iter_mut().zip(wrow) {
            *a += xv * wv.f64();
        }
    }
}

/// `acc[i, j] += a[i] * b[j]`.
pub(crate) fn outer_acc<S: Real>(a: &[S], b: &[S], acc: &mut [f64]) {
    let n = b.len();
    for (i, &av) in a.iter().enumerate() {
        if av == S::zero() {
            continue;
        }
        let av = av.f64();
        for (o, &bv) in acc[i * n..(i + 1) * n].iter_mut().zip(b) {
            *o += av * bv.f64();
        }
    }
}

pub(crate) fn dot<S: Real>(a: &[S], b: &[S]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x.f64() * y.f64()).sum()
}
