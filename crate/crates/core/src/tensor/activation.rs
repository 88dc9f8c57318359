use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    /// Bounded ReLU clamping to `[0, 1]`.
    Brelu,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    match kind {
        Activation::Relu => input.map(|v| v.max(0.0)),
        Activation::Sigmoid => input.map(sigmoid),
        Activation::Brelu => input.map(|v| v.clamp(0.0, 1.0)),
    }
}

/// Gradient with respect to the activation's input.
///
/// `input` is the pre-activation value and `output` the forward result;
/// sigmoid uses `output`, the piecewise kinds use `input`.
pub fn activation_backward(input: &Tensor, output: &Tensor, grad_out: &Tensor, kind: Activation) -> Result<Tensor> {
    match kind {
        Activation::Relu => input.zip_map(grad_out, |x, g| if x > 0.0 { g } else { 0.0 }),
        Activation::Brelu => input.zip_map(grad_out, |x, g| if x > 0.0 && x < 1.0 { g } else { 0.0 }),
        Activation::Sigmoid => output.zip_map(grad_out, |s, g| g * s * (1.0 - s)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn relu_values() {
        assert_eq!(activation(&t(&[-1.0, 0.0, 2.0]), Activation::Relu).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sigmoid_zero_is_half() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(800.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0);
    }

    #[test]
    fn brelu_clamps_unit_interval() {
        let y = activation(&t(&[-0.5, 0.3, 1.7]), Activation::Brelu);
        assert_eq!(y.data(), &[0.0, 0.3, 1.0]);
    }

    #[test]
    fn brelu_gradient_masked_outside_open_interval() {
        let x = t(&[-0.5, 0.3, 1.7, 0.0, 1.0]);
        let y = activation(&x, Activation::Brelu);
        let g = activation_backward(&x, &y, &Tensor::full(&[5], 1.0), Activation::Brelu).unwrap();
        assert_eq!(g.data(), &[0.0, 1.0, 0.0, 0.0, 0.0]);
    }
}
