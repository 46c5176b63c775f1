use super::model::ModelError;
use super::tensor::Scalar;

/// Softmax of one row, computed in `f64` after subtracting the maximum.
pub fn softmax_f64<T: Scalar>(logits: &[T]) -> Vec<f64> {
    let max = logits.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|v| (v.to_f64() - max).exp()).collect();
    let sum: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= sum;
    }
    p
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    softmax_f64(logits).into_iter().map(T::from_f64).collect()
}

/// `-log softmax(row)[target]` via log-sum-exp.
pub fn neg_log_likelihood<T: Scalar>(row: &[T], target: usize) -> f64 {
    let max = row.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v.to_f64() - max).exp()).sum::<f64>().ln();
    lse - row[target].to_f64()
}

/// Mean negative log-likelihood of `targets` under row-major `logits`
/// (`targets.len() × vocab`). Accumulated in `f64`; 0 for no steps.
pub fn cross_entropy<T: Scalar>(logits: &[T], vocab: usize, targets: &[usize]) -> Result<f64, ModelError> {
    if logits.len() != targets.len() * vocab {
        return Err(ModelError::ShapeMismatch(format!(
            "{} logits for {} targets over {vocab} classes",
            logits.len(),
            targets.len()
        )));
    }
    if let Some(&index) = targets.iter().find(|&&t| t >= vocab) {
        return Err(ModelError::IndexOutOfRange { index, vocab });
    }
    if targets.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = logits
        .chunks(vocab)
        .zip(targets)
        .map(|(row, &t)| neg_log_likelihood(row, t))
        .sum();
    Ok(total / targets.len() as f64)
}
