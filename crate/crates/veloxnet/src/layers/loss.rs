//! Softmax cross-entropy head, fused with its gradient.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Row softmax with max-subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.rank() != 2 {
        return Err(Error::dim("softmax expects (N, K) logits"));
    }
    let k = logits.shape()[1];
    let mut out = Tensor::zeros(logits.shape());
    for (row, orow) in logits
        .data()
        .chunks_exact(k)
        .zip(out.data_mut().chunks_exact_mut(k))
    {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for (o, &v) in orow.iter_mut().zip(row) {
            *o = (v - max).exp();
            z += *o;
        }
        for o in orow.iter_mut() {
            *o = *o / z;
        }
    }
    Ok(out)
}

/// Mean negative log-likelihood over the batch together with
/// `dlogits = (softmax - onehot) / N`.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>)> {
    if logits.rank() != 2 {
        return Err(Error::dim("softmax_cross_entropy expects (N, K) logits"));
    }
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != n {
        return Err(Error::data(format!(
            "{} labels for a batch of {n}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::data(format!("label {bad} out of range [0, {k})")));
    }
    let inv_n = T::one() / T::from_f64(n as f64);
    let mut dlogits = Tensor::zeros(logits.shape());
    let mut loss = T::zero();
    for (i, (row, drow)) in logits
        .data()
        .chunks_exact(k)
        .zip(dlogits.data_mut().chunks_exact_mut(k))
        .enumerate()
    {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for &v in row {
            z += (v - max).exp();
        }
        let log_z = z.ln();
        loss -= (row[labels[i]] - max) - log_z;
        for (j, (d, &v)) in drow.iter_mut().zip(row).enumerate() {
            let p = (v - max).exp() / z;
            let target = if j == labels[i] { T::one() } else { T::zero() };
            *d = (p - target) * inv_n;
        }
    }
    Ok((loss * inv_n, dlogits))
}
