//! Layer-stack serialization used inside the "ROMW" checkpoint files:
//! a manifest entry per layer (type tag, shapes, hyperparameters) followed
//! by the f64 parameter blobs, all little-endian.

use std::io::{Read, Write};

use super::{Activation, ConvLayer, DenseLayer, Layer, Stack, Tensor};
use crate::binio::{ByteReader, ByteWriter};
use crate::{Error, Result};

const TAG_CONV: u32 = 1;
const TAG_DENSE: u32 = 2;
const TAG_ACT: u32 = 3;
const TAG_FLATTEN: u32 = 4;
const TAG_UNFLATTEN: u32 = 5;

pub fn write_stack<W: Write>(w: &mut ByteWriter<W>, stack: &Stack) -> Result<()> {
    w.u32(stack.layers.len() as u32)?;
    for layer in &stack.layers {
        match layer {
            Layer::Conv(c) => {
                w.u32(TAG_CONV)?;
                w.u32(c.transposed as u32)?;
                w.u32(c.rank() as u32)?;
                w.u32(c.weights.shape[0] as u32)?;
                w.u32(c.weights.shape[1] as u32)?;
                w.u32(c.kernel() as u32)?;
                w.u32(c.stride as u32)?;
                w.u32(c.padding as u32)?;
                match &c.output_size {
                    Some(sizes) => {
                        w.u32(sizes.len() as u32)?;
                        for &s in sizes {
                            w.u32(s as u32)?;
                        }
                    }
                    None => w.u32(0)?,
                }
                w.f64_slice(&c.weights.data)?;
                w.f64_slice(&c.bias)?;
            }
            Layer::Dense(d) => {
                w.u32(TAG_DENSE)?;
                w.u32(d.f_out() as u32)?;
                w.u32(d.f_in() as u32)?;
                w.f64_slice(&d.weights.data)?;
                w.f64_slice(&d.bias)?;
            }
            Layer::Act(a) => {
                w.u32(TAG_ACT)?;
                w.str(a.name())?;
            }
            Layer::Flatten => w.u32(TAG_FLATTEN)?,
            Layer::Unflatten { shape } => {
                w.u32(TAG_UNFLATTEN)?;
                w.u32(shape.len() as u32)?;
                for &s in shape {
                    w.u32(s as u32)?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_stack<R: Read>(r: &mut ByteReader<R>) -> Result<Stack> {
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let tag = r.u32()?;
        let layer = match tag {
            TAG_CONV => {
                let transposed = r.u32()? != 0;
                let rank = r.u32()? as usize;
                let c_out = r.u32()? as usize;
                let c_in = r.u32()? as usize;
                let kernel = r.u32()? as usize;
                let stride = r.u32()? as usize;
                let padding = r.u32()? as usize;
                let n_out_size = r.u32()? as usize;
                let output_size = if n_out_size == 0 {
                    None
                } else {
                    let mut v = Vec::with_capacity(n_out_size);
                    for _ in 0..n_out_size {
                        v.push(r.u32()? as usize);
                    }
                    Some(v)
                };
                if rank != 2 && rank != 3 {
                    return Err(Error::format(r.path(), format!("bad conv rank {rank}")));
                }
                let mut shape = vec![c_out, c_in];
                shape.extend(std::iter::repeat(kernel).take(rank));
                let n_w: usize = shape.iter().product();
                let weights = Tensor::from_vec(shape, r.f64_vec(n_w)?);
                let n_bias = if transposed { c_in } else { c_out };
                let bias = r.f64_vec(n_bias)?;
                Layer::Conv(ConvLayer {
                    weights,
                    bias,
                    stride,
                    padding,
                    transposed,
                    output_size,
                })
            }
            TAG_DENSE => {
                let f_out = r.u32()? as usize;
                let f_in = r.u32()? as usize;
                let weights = Tensor::from_vec(vec![f_out, f_in], r.f64_vec(f_out * f_in)?);
                let bias = r.f64_vec(f_out)?;
                Layer::Dense(DenseLayer { weights, bias })
            }
            TAG_ACT => Layer::Act(Activation::from_name(&r.str()?)?),
            TAG_FLATTEN => Layer::Flatten,
            TAG_UNFLATTEN => {
                let n = r.u32()? as usize;
                let mut shape = Vec::with_capacity(n);
                for _ in 0..n {
                    shape.push(r.u32()? as usize);
                }
                Layer::Unflatten { shape }
            }
            other => {
                return Err(Error::format(r.path(), format!("unknown layer tag {other}")));
            }
        };
        layers.push(layer);
    }
    Ok(Stack::new(layers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn stack_round_trip_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::from_seed([3; 32]);
        let mut conv = ConvLayer::new(1, 4, 3, 2, 2, 1);
        conv.init_glorot(&mut rng);
        let mut deconv = ConvLayer::new_transposed(4, 1, 3, 2, 2, 1, Some(vec![7, 9]));
        deconv.init_glorot(&mut rng);
        let mut dense = DenseLayer::new(8, 3);
        dense.init_glorot(&mut rng);
        let stack = Stack::new(vec![
            Layer::Conv(conv),
            Layer::Act(Activation::Elu),
            Layer::Flatten,
            Layer::Dense(dense),
            Layer::Unflatten { shape: vec![3, 1, 1] },
            Layer::Conv(deconv),
        ]);
        let mut buf = Vec::new();
        let mut w = ByteWriter::new(&mut buf, "mem");
        write_stack(&mut w, &stack).unwrap();
        w.finish().unwrap();
        let mut r = ByteReader::new(buf.as_slice(), "mem");
        let loaded = read_stack(&mut r).unwrap();
        assert_eq!(stack, loaded);
    }
}
