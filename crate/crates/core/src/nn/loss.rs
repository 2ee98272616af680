use super::{NnError, Real, Tensor};

/// Output of [`softmax_cross_entropy`].
#[derive(Debug, Clone)]
pub struct CrossEntropy<S = f32> {
    /// Mean negative log-likelihood of the true classes.
    pub loss: f64,
    /// `(probs − one_hot) / B`.
    pub grad: Tensor<S>,
    pub probs: Tensor<S>,
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax<S: Real>(logits: &Tensor<S>) -> Tensor<S> {
    let mut out = Vec::with_capacity(logits.len());
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let max = row.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.f64() - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| S::lit(e / total)));
    }
    Tensor::from_vec(logits.shape(), out).expect("same shape as logits")
}

pub fn softmax_cross_entropy<S: Real>(logits: &Tensor<S>, labels: &[usize]) -> Result<CrossEntropy<S>, NnError> {
    if logits.shape().len() != 2 || logits.rows() != labels.len() {
        return Err(NnError::shape("cross entropy", logits.shape(), &[labels.len()]));
    }
    let (b, c) = (logits.rows(), logits.cols());
    let mut loss = 0f64;
    let mut probs = Vec::with_capacity(b * c);
    let mut grad = Vec::with_capacity(b * c);
    for (r, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(NnError::BadLabel { label, classes: c });
        }
        let row = logits.row(r);
        let max = row.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = row.iter().map(|v| v.f64() - max).collect();
        let log_total = shifted.iter().map(|v| v.exp()).sum::<f64>().ln();
        loss += log_total - shifted[label];
        for (k, s) in shifted.iter().enumerate() {
            let p = (s - log_total).exp();
            probs.push(S::lit(p));
            let target = if k == label { 1.0 } else { 0.0 };
            grad.push(S::lit((p - target) / b as f64));
        }
    }
    let loss = loss / b as f64;
    if !loss.is_finite() {
        return Err(NnError::NonFiniteLoss(loss));
    }
    Ok(CrossEntropy {
        loss,
        grad: Tensor::from_vec(&[b, c], grad)?,
        probs: Tensor::from_vec(&[b, c], probs)?,
    })
}
