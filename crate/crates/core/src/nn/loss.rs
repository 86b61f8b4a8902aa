use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::scalar::Scalar;

/// Softmax cross-entropy of `logits` against class `label`.
///
/// Returns the loss and its gradient `softmax(logits) - one_hot(label)`.
/// The maximum logit is subtracted before exponentiating.
pub fn softmax_xent<T: Scalar>(
    logits: &DenseVector<T>,
    label: usize,
) -> Result<(T, DenseVector<T>)> {
    if label >= logits.dim() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            logits.dim()
        )));
    }
    let max = logits
        .as_slice()
        .iter()
        .fold(T::neg_infinity(), |m, &v| m.max(v));
    let shifted = logits.map(|v| v - max);
    let exps = shifted.map(T::exp);
    let total: T = exps.as_slice().iter().copied().sum();
    let loss = total.ln() - shifted.get(label);
    let mut grad = exps.scaled(T::one() / total);
    grad.set(label, grad.get(label) - T::one());
    Ok((loss, grad))
}
