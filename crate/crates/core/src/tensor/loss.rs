use super::Tensor;
use crate::error::{Error, Result};

/// Scalar loss value with its gradient with respect to the prediction.
#[derive(Clone, Debug)]
pub struct Loss {
    pub value: f64,
    pub grad: Tensor,
}

/// Mean squared error over all elements.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<Loss> {
    pred.expect_same_shape(target, "mse_loss")?;
    let n = pred.len() as f64;
    let value = pred.data().iter().zip(target.data()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let grad = pred.zip_map(target, |p, t| 2.0 * (p - t) / n)?;
    Ok(Loss { value, grad })
}

/// Mean binary cross-entropy of probabilities `pred` against targets in [0, 1].
pub fn bce_loss(pred: &Tensor, target: &Tensor) -> Result<Loss> {
    pred.expect_same_shape(target, "bce_loss")?;
    if let Some(p) = pred.data().iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::InvalidArgument(format!("bce input {p} outside (0, 1)")));
    }
    let n = pred.len() as f64;
    let value =
        pred.data().iter().zip(target.data()).map(|(&p, &t)| -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())).sum::<f64>()
            / n;
    let grad = pred.zip_map(target, |p, t| (p - t) / (p * (1.0 - p)) / n)?;
    Ok(Loss { value, grad })
}

/// Binary cross-entropy of `sigmoid(logit)` against `target`, computed
/// stably from the logit. Returns `(loss, d loss / d logit)`.
pub fn bce_with_logits(logit: f64, target: f64) -> (f64, f64) {
    // log(1 + e^-|z|) + max(z, 0) - z t
    let value = logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p();
    (value, super::sigmoid(logit) - target)
}

/// Softmax cross-entropy of `logits` against class `target`.
/// Returns `(loss, d loss / d logits)`.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let value = sum.ln() - (logits[target] - max);
    let grad = exps.iter().enumerate().map(|(i, &e)| e / sum - if i == target { 1.0 } else { 0.0 }).collect();
    (value, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Tensor {
        Tensor::new(vec![x.len()], x.to_vec()).unwrap()
    }

    #[test]
    fn mse_cases() {
        let x = v(&[0.3, -2.0]);
        assert_eq!(mse_loss(&x, &x).unwrap().value, 0.0);
        assert_eq!(mse_loss(&v(&[0.0, 0.0]), &v(&[1.0, 1.0])).unwrap().value, 1.0);
    }

    #[test]
    fn bce_half_is_ln2() {
        let l = bce_loss(&v(&[0.5]), &v(&[1.0])).unwrap();
        assert!((l.value - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_with_logits(0.0, 1.0).0 - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bce_rejects_out_of_range() {
        assert!(bce_loss(&v(&[1.0]), &v(&[1.0])).is_err());
        assert!(bce_loss(&v(&[-0.1]), &v(&[0.0])).is_err());
    }

    #[test]
    fn logits_form_matches_probability_form() {
        for &z in &[-3.0, -0.2, 0.0, 0.7, 5.0] {
            for &t in &[0.0, 1.0] {
                let p = super::super::sigmoid(z);
                let direct = bce_loss(&v(&[p]), &v(&[t])).unwrap().value;
                assert!((bce_with_logits(z, t).0 - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_ce_uniform() {
        let (l, g) = softmax_cross_entropy(&[0.0, 0.0, 0.0], 1);
        assert!((l - 3f64.ln()).abs() < 1e-15);
        assert!((g.iter().sum::<f64>()).abs() < 1e-15);
    }
}
