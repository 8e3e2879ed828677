use super::{Activation, ConvLayer, DenseLayer, Tensor};
use crate::{Error, Result};

/// One stage of a fixed feed-forward layer sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(ConvLayer),
    Dense(DenseLayer),
    Act(Activation),
    /// `[N, C, spatial...] -> [N, C * prod(spatial)]`
    Flatten,
    /// `[N, F] -> [N, shape...]` with `prod(shape) == F`
    Unflatten { shape: Vec<usize> },
}

/// Parameter gradients of one trainable layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv(c) => c.output_shape(input),
            Layer::Dense(d) => {
                if input.len() != 2 || input[1] != d.f_in() {
                    return Err(Error::ShapeMismatch(format!(
                        "dense layer takes [N, {}], got {:?}",
                        d.f_in(),
                        input
                    )));
                }
                Ok(vec![input[0], d.f_out()])
            }
            Layer::Act(_) => Ok(input.to_vec()),
            Layer::Flatten => {
                if input.len() < 2 {
                    return Err(Error::ShapeMismatch(format!(
                        "flatten needs a batched input, got {input:?}"
                    )));
                }
                Ok(vec![input[0], input[1..].iter().product()])
            }
            Layer::Unflatten { shape } => {
                let f: usize = shape.iter().product();
                if input.len() != 2 || input[1] != f {
                    return Err(Error::ShapeMismatch(format!(
                        "unflatten to {shape:?} needs [N, {f}], got {input:?}"
                    )));
                }
                let mut out = vec![input[0]];
                out.extend_from_slice(shape);
                Ok(out)
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv(c) => c.forward(x),
            Layer::Dense(d) => d.forward(x),
            Layer::Act(a) => Ok(Tensor::from_vec(
                x.shape.clone(),
                x.data.iter().map(|&v| a.apply(v)).collect(),
            )),
            Layer::Flatten | Layer::Unflatten { .. } => {
                let shape = self.output_shape(&x.shape)?;
                Ok(x.clone().reshaped(shape))
            }
        }
    }

    /// Gradient w.r.t. the layer input and (for trainable layers) the
    /// parameters, given the input seen during the forward pass.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Option<LayerGrads>)> {
        match self {
            Layer::Conv(c) => {
                let (gx, gw, gb) = c.backward(x, grad_out)?;
                Ok((gx, Some(LayerGrads { weights: gw, bias: gb })))
            }
            Layer::Dense(d) => {
                let (gx, gw, gb) = d.backward(x, grad_out)?;
                Ok((gx, Some(LayerGrads { weights: gw, bias: gb })))
            }
            Layer::Act(a) => {
                if grad_out.shape != x.shape {
                    return Err(Error::ShapeMismatch(format!(
                        "activation grad shape {:?} vs input {:?}",
                        grad_out.shape, x.shape
                    )));
                }
                let data = x
                    .data
                    .iter()
                    .zip(&grad_out.data)
                    .map(|(&xi, &gi)| gi * a.derivative(xi))
                    .collect();
                Ok((Tensor::from_vec(x.shape.clone(), data), None))
            }
            Layer::Flatten | Layer::Unflatten { .. } => {
                let expect = self.output_shape(&x.shape)?;
                if grad_out.shape != expect {
                    return Err(Error::ShapeMismatch(format!(
                        "reshape grad shape {:?}, expected {expect:?}",
                        grad_out.shape
                    )));
                }
                Ok((grad_out.clone().reshaped(x.shape.clone()), None))
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv(c) => c.param_count(),
            Layer::Dense(d) => d.param_count(),
            _ => 0,
        }
    }

    /// Mutable views of (weights, bias) for trainable layers.
    pub fn params_mut(&mut self) -> Option<(&mut Vec<f64>, &mut Vec<f64>)> {
        match self {
            Layer::Conv(c) => Some((&mut c.weights.data, &mut c.bias)),
            Layer::Dense(d) => Some((&mut d.weights.data, &mut d.bias)),
            _ => None,
        }
    }
}

/// A fixed sequence of layers applied in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Stack {
    pub layers: Vec<Layer>,
}

impl Stack {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input.to_vec();
        for l in &self.layers {
            shape = l.output_shape(&shape)?;
        }
        Ok(shape)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        for l in &self.layers {
            cur = l.forward(&cur)?;
        }
        Ok(cur)
    }

    /// Forward pass that keeps each layer's input for the backward pass.
    pub fn forward_cached(&self, x: &Tensor) -> Result<(Vec<Tensor>, Tensor)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for l in &self.layers {
            let next = l.forward(&cur)?;
            inputs.push(cur);
            cur = next;
        }
        Ok((inputs, cur))
    }

    /// Backpropagate through the whole stack. Returns the gradient w.r.t.
    /// the stack input and per-layer parameter gradients.
    pub fn backward(
        &self,
        inputs: &[Tensor],
        grad_out: &Tensor,
    ) -> Result<(Tensor, Vec<Option<LayerGrads>>)> {
        assert_eq!(inputs.len(), self.layers.len());
        let mut grads = vec![None; self.layers.len()];
        let mut g = grad_out.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let (gx, lg) = l.backward(&inputs[i], &g)?;
            grads[i] = lg;
            g = gx;
        }
        Ok((g, grads))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }
}
