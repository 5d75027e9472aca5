use crate::error::{Error, Result};

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy of `softmax(logits)` against a one-hot target; returns the
/// loss and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &[f64], one_hot: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != one_hot.len() {
        return Err(Error::Dimension {
            layer: "cross-entropy".into(),
            expected: logits.len(),
            got: one_hot.len(),
        });
    }
    let ones = one_hot.iter().filter(|v| **v == 1.0).count();
    let zeros = one_hot.iter().filter(|v| **v == 0.0).count();
    if ones != 1 || ones + zeros != one_hot.len() {
        return Err(Error::usage("cross-entropy target must be one-hot"));
    }
    let class = one_hot.iter().position(|v| *v == 1.0).unwrap_or(0);
    cross_entropy_class(logits, class)
}

/// Same as [`softmax_cross_entropy`] with the target given as a class index.
pub fn cross_entropy_class(logits: &[f64], class: usize) -> Result<(f64, Vec<f64>)> {
    if class >= logits.len() {
        return Err(Error::usage(format!(
            "class {class} out of range for {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    let loss = (log_sum - logits[class]).max(0.0);
    let mut grad = softmax(logits);
    grad[class] -= 1.0;
    Ok((loss, grad))
}

/// Huber loss: quadratic within `delta` of the target, linear outside.
pub fn huber(pred: f64, target: f64, delta: f64) -> f64 {
    let e = (pred - target).abs();
    if e <= delta {
        0.5 * e * e
    } else {
        delta * (e - 0.5 * delta)
    }
}

pub fn huber_grad(pred: f64, target: f64, delta: f64) -> f64 {
    let e = pred - target;
    e.clamp(-delta, delta)
}
