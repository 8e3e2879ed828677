use rand::Rng;

use super::Tensor;
use crate::{Error, Result};

/// Fully connected layer: `y = W x + b`, weights `[F_out, F_in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(f_in: usize, f_out: usize) -> Self {
        Self {
            weights: Tensor::zeros(vec![f_out, f_in]),
            bias: vec![0.0; f_out],
        }
    }

    pub fn f_in(&self) -> usize {
        self.weights.shape[1]
    }

    pub fn f_out(&self) -> usize {
        self.weights.shape[0]
    }

    pub fn init_glorot(&mut self, rng: &mut impl Rng) {
        let bound = (6.0 / (self.f_in() + self.f_out()) as f64).sqrt();
        for w in &mut self.weights.data {
            *w = rng.gen_range(-bound..bound);
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.numel() + self.bias.len()
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        if x.shape.len() != 2 || x.shape[1] != self.f_in() {
            return Err(Error::ShapeMismatch(format!(
                "dense layer takes [N, {}], got {:?}",
                self.f_in(),
                x.shape
            )));
        }
        Ok(x.shape[0])
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let n = self.check_input(x)?;
        let (fi, fo) = (self.f_in(), self.f_out());
        let mut y = Tensor::zeros(vec![n, fo]);
        for b in 0..n {
            let xr = &x.data[b * fi..(b + 1) * fi];
            let yr = &mut y.data[b * fo..(b + 1) * fo];
            for o in 0..fo {
                let wr = &self.weights.data[o * fi..(o + 1) * fi];
                let mut acc = self.bias[o];
                for (wv, xv) in wr.iter().zip(xr) {
                    acc += wv * xv;
                }
                yr[o] = acc;
            }
        }
        Ok(y)
    }

    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Vec<f64>)> {
        let n = self.check_input(x)?;
        let (fi, fo) = (self.f_in(), self.f_out());
        if grad_out.shape != vec![n, fo] {
            return Err(Error::ShapeMismatch(format!(
                "dense grad_out shape {:?}, expected [{n}, {fo}]",
                grad_out.shape
            )));
        }
        let mut gx = Tensor::zeros(x.shape.clone());
        let mut gw = Tensor::zeros(self.weights.shape.clone());
        let mut gb = vec![0.0; fo];
        for b in 0..n {
            let xr = &x.data[b * fi..(b + 1) * fi];
            let gyr = &grad_out.data[b * fo..(b + 1) * fo];
            let gxr = &mut gx.data[b * fi..(b + 1) * fi];
            for o in 0..fo {
                let g = gyr[o];
                gb[o] += g;
                let wr = &self.weights.data[o * fi..(o + 1) * fi];
                let gwr = &mut gw.data[o * fi..(o + 1) * fi];
                for i in 0..fi {
                    gxr[i] += wr[i] * g;
                    gwr[i] += xr[i] * g;
                }
            }
        }
        Ok((gx, gw, gb))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input_through() {
        let mut layer = DenseLayer::new(3, 3);
        for i in 0..3 {
            layer.weights.data[i * 3 + i] = 1.0;
        }
        let x = Tensor::from_vec(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.5]);
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn hand_case_with_bias() {
        let mut layer = DenseLayer::new(2, 1);
        layer.weights.data = vec![2.0, -1.0];
        layer.bias = vec![0.5];
        let x = Tensor::from_vec(vec![1, 2], vec![3.0, 4.0]);
        assert_eq!(layer.forward(&x).unwrap().data, vec![2.5]);
    }

    #[test]
    fn backward_shapes_and_bias_grad() {
        let layer = DenseLayer::new(4, 2);
        let x = Tensor::zeros(vec![3, 4]);
        let gy = Tensor::from_vec(vec![3, 2], vec![1.0; 6]);
        let (gx, gw, gb) = layer.backward(&x, &gy).unwrap();
        assert_eq!(gx.shape, vec![3, 4]);
        assert_eq!(gw.shape, vec![2, 4]);
        assert_eq!(gb, vec![3.0, 3.0]);
    }
}
