use crate::nn::Tensor;

use super::{LearnError, LearnResult};

/// Smallest probability fed to the logarithm when scoring materialized
/// probabilities.
pub const PROB_FLOOR: f64 = 1e-12;

/// Max-shifted softmax; the result sums to 1.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&h| (h - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `h_j - logsumexp(h)`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&h| (h - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&h| h - lse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    pub value: f64,
    /// The true-class probability was below [`PROB_FLOOR`] and the loss was
    /// capped at `-ln(PROB_FLOOR)`.
    pub capped: bool,
}

/// `-ln p[target]` for a probability vector.
pub fn cross_entropy(probs: &[f64], target: usize) -> CrossEntropy {
    let p = probs[target];
    if p < PROB_FLOOR {
        CrossEntropy {
            value: -PROB_FLOOR.ln(),
            capped: true,
        }
    } else {
        CrossEntropy {
            value: -p.ln(),
            capped: false,
        }
    }
}

/// Mean cross-entropy of `[batch, classes]` logits against class indices,
/// evaluated through log-sum-exp, and its gradient `(softmax - onehot) / batch`.
pub fn softmax_cross_entropy(logits: &Tensor, targets: &[usize]) -> LearnResult<(f64, Tensor)> {
    let (batch, classes) = logits.dims2("softmax cross-entropy")?;
    if targets.len() != batch {
        return Err(LearnError::Config(format!(
            "{} targets for a batch of {batch}",
            targets.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= classes) {
        return Err(LearnError::Config(format!("target {t} out of range for {classes} classes")));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; batch * classes];
    for (b, &t) in targets.iter().enumerate() {
        let row = &logits.data[b * classes..(b + 1) * classes];
        let ls = log_softmax(row);
        loss -= ls[t];
        for (j, g) in grad[b * classes..(b + 1) * classes].iter_mut().enumerate() {
            let onehot = if j == t { 1.0 } else { 0.0 };
            *g = (ls[j].exp() - onehot) / batch as f64;
        }
    }
    Ok((loss / batch as f64, Tensor::new(&[batch, classes], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits() {
        let p = softmax(&[0.0, 0.0, 0.0]);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let c = 3f64.ln();
        let p = softmax(&[c + 1000.0, 1000.0]);
        assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_closed_forms() {
        assert_eq!(cross_entropy(&[0.0, 1.0], 1).value, 0.0);
        let ce = cross_entropy(&[0.1, 0.8, 0.1], 1);
        assert!((ce.value - 0.223_143_551_314_209_7).abs() < 1e-12);
        assert!(!ce.capped);
        let uniform = vec![0.125; 8];
        assert!((cross_entropy(&uniform, 3).value - 8f64.ln()).abs() < 1e-12);
        let capped = cross_entropy(&[1.0, 0.0], 1);
        assert!(capped.capped);
        assert!((capped.value - 27.631_021_115_928_547).abs() < 1e-9);
    }

    #[test]
    fn batch_loss_and_gradient() {
        let logits = Tensor::new(&[2, 2], vec![0.0, 0.0, 2.0, 0.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[0, 1]).unwrap();
        let p = 1.0 / (1.0 + (-2f64).exp());
        let expected = (2f64.ln() - (1.0 - p).ln()) / 2.0;
        assert!((loss - expected).abs() < 1e-12);
        assert!((grad.data[0] + 0.25).abs() < 1e-12);
        assert!((grad.data[3] - (1.0 - p - 1.0) / 2.0).abs() < 1e-12);
        assert!(softmax_cross_entropy(&logits, &[0, 2]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            h in prop::collection::vec(-50.0f64..50.0, 2..10),
            c in -500.0f64..500.0,
        ) {
            let p = softmax(&h);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = h.iter().map(|v| v + c).collect();
            for (a, b) in p.iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let argmax = |v: &[f64]| v.iter().enumerate().fold(0, |best, (i, x)| if *x > v[best] { i } else { best });
            prop_assert_eq!(argmax(&p), argmax(&h));
        }

        #[test]
        fn log_sum_exp_matches_naive(h in prop::collection::vec(-10.0f64..10.0, 2..8), t in 0usize..8) {
            let t = t % h.len();
            let logits = Tensor::new(&[1, h.len()], h.clone()).unwrap();
            let (lse_loss, _) = softmax_cross_entropy(&logits, &[t]).unwrap();
            let exps: Vec<f64> = h.iter().map(|v| v.exp()).collect();
            let naive = -(exps[t] / exps.iter().sum::<f64>()).ln();
            prop_assert!(lse_loss >= 0.0);
            prop_assert!((lse_loss - naive).abs() < 1e-9);
        }
    }
}
