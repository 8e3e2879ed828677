//! Minimal tensor and layer kernels with exact analytic gradients:
//! convolution, transposed convolution, dense layers, activations,
//! flatten, MSE loss, and an adaptive-moment optimizer. Everything is
//! 64-bit and deterministic; gradients are verified against central
//! finite differences.

mod adam;
mod checkpoint;
mod conv;
mod dense;
mod gradcheck;
mod layer;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{read_stack, write_stack};
pub use conv::ConvLayer;
pub use dense::DenseLayer;
pub use gradcheck::{grad_check, GradCheckReport};
pub use layer::{Layer, LayerGrads, Stack};
pub use tensor::Tensor;

use crate::{Error, Result};

/// Elementwise activation functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative as a function of the pre-activation input.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Elu => "elu",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "elu" => Ok(Activation::Elu),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::InvalidArgument(format!(
                "unknown activation '{other}'"
            ))),
        }
    }
}

/// Mean squared error over all elements, with the gradient w.r.t. `pred`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape != target.shape {
        return Err(Error::ShapeMismatch(format!(
            "mse shapes {:?} vs {:?}",
            pred.shape, target.shape
        )));
    }
    let m = pred.data.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(pred.shape.clone());
    for i in 0..pred.data.len() {
        let d = pred.data[i] - target.data[i];
        loss += d * d;
        grad.data[i] = 2.0 * d / m;
    }
    Ok((loss / m, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_zero_at_equal_inputs() {
        let x = Tensor::from_vec(vec![2], vec![1.5, -0.5]);
        let (loss, grad) = mse_loss(&x, &x).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn mse_hand_case() {
        let p = Tensor::from_vec(vec![2], vec![1.0, 2.0]);
        let t = Tensor::from_vec(vec![2], vec![0.0, 0.0]);
        let (loss, grad) = mse_loss(&p, &t).unwrap();
        assert_eq!(loss, 2.5);
        assert_eq!(grad.data, vec![1.0, 2.0]);
    }

    #[test]
    fn activation_basics() {
        assert_eq!(Activation::Relu.apply(-2.0), 0.0);
        assert_eq!(Activation::Linear.derivative(5.0), 1.0);
        assert!((Activation::Elu.apply(-1.0) - (-1.0f64).exp_m1()).abs() < 1e-15);
        assert!((Activation::Tanh.derivative(0.0) - 1.0).abs() < 1e-15);
        for name in ["elu", "relu", "tanh", "linear"] {
            assert_eq!(Activation::from_name(name).unwrap().name(), name);
        }
        assert!(Activation::from_name("gelu").is_err());
    }
}
