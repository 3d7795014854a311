//! Scalar reductions used by the agent losses, each with its derivative.

/// `log(mean(exp(values)))`, evaluated stably, with the softmax weights
/// `d/d values_k`.
pub fn log_mean_exp(values: &[f64]) -> (f64, Vec<f64>) {
    assert!(!values.is_empty(), "log-mean-exp of an empty set");
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let value = max + (sum / values.len() as f64).ln();
    let weights = exps.into_iter().map(|e| e / sum).collect();
    (value, weights)
}

/// Mean of squared residuals `(pred - target)^2` and its gradient in `pred`.
pub fn mean_squared_error(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len());
    let n = pred.len() as f64;
    let mut value = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let r = p - t;
            value += r * r;
            2.0 * r / n
        })
        .collect();
    (value / n, grad)
}
