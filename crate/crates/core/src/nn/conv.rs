//! Convolution and transposed convolution for 2D and 3D fields.
//!
//! Both kernel ranks share one implementation: 2D inputs are viewed as 3D
//! with a unit depth axis. The transposed convolution is realized as the
//! exact linear adjoint of the forward convolution with the same weights,
//! which is what makes the inner-product identity
//! `<conv(x), y> == <x, deconv(y)>` hold to round-off.

use rand::Rng;
use rayon::prelude::*;

use super::Tensor;
use crate::{Error, Result};

/// Spatial output extent of a forward convolution.
fn out_size(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if input + 2 * pad < k {
        return Err(Error::ShapeMismatch(format!(
            "input extent {input} with padding {pad} smaller than kernel {k}"
        )));
    }
    Ok((input + 2 * pad - k) / stride + 1)
}

/// Output index range `[lo, hi)` for which `o*stride - pad + kk` lands
/// inside `[0, input)`.
#[inline]
fn valid_range(out: usize, input: usize, stride: usize, pad: usize, kk: usize) -> (usize, usize) {
    let lo = if kk >= pad {
        0
    } else {
        (pad - kk).div_ceil(stride)
    };
    let top = input as isize - 1 - kk as isize + pad as isize;
    if top < 0 {
        return (0, 0);
    }
    let hi = (top as usize / stride + 1).min(out);
    (lo.min(hi), hi)
}

/// Canonical 3D geometry of one convolution application.
#[derive(Debug, Clone, Copy)]
struct Geom {
    n: usize,
    c_in: usize,
    c_out: usize,
    in_d: [usize; 3],
    out_d: [usize; 3],
    k: [usize; 3],
    s: [usize; 3],
    p: [usize; 3],
}

impl Geom {
    fn in_plane(&self) -> usize {
        self.in_d[0] * self.in_d[1] * self.in_d[2]
    }

    fn out_plane(&self) -> usize {
        self.out_d[0] * self.out_d[1] * self.out_d[2]
    }
}

/// y[n, co] = sum_ci w[co, ci] * x[n, ci] (+ bias), cross-correlation.
fn forward_raw(x: &[f64], w: &[f64], bias: Option<&[f64]>, g: &Geom) -> Vec<f64> {
    let in_plane = g.in_plane();
    let out_plane = g.out_plane();
    let mut y = vec![0.0; g.n * g.c_out * out_plane];
    let k_vol = g.k[0] * g.k[1] * g.k[2];
    y.par_chunks_mut(out_plane).enumerate().for_each(|(idx, chunk)| {
        let n = idx / g.c_out;
        let co = idx % g.c_out;
        if let Some(b) = bias {
            chunk.fill(b[co]);
        }
        for ci in 0..g.c_in {
            let x_base = (n * g.c_in + ci) * in_plane;
            let w_base = (co * g.c_in + ci) * k_vol;
            for kd in 0..g.k[0] {
                let (dlo, dhi) = valid_range(g.out_d[0], g.in_d[0], g.s[0], g.p[0], kd);
                for kh in 0..g.k[1] {
                    let (hlo, hhi) = valid_range(g.out_d[1], g.in_d[1], g.s[1], g.p[1], kh);
                    for kw in 0..g.k[2] {
                        let (wlo, whi) = valid_range(g.out_d[2], g.in_d[2], g.s[2], g.p[2], kw);
                        if wlo >= whi {
                            continue;
                        }
                        let wv = w[w_base + (kd * g.k[1] + kh) * g.k[2] + kw];
                        let iw0 = wlo * g.s[2] + kw - g.p[2];
                        for od in dlo..dhi {
                            let id = od * g.s[0] + kd - g.p[0];
                            for oh in hlo..hhi {
                                let ih = oh * g.s[1] + kh - g.p[1];
                                let x_off = x_base + (id * g.in_d[1] + ih) * g.in_d[2];
                                let y_off = (od * g.out_d[1] + oh) * g.out_d[2];
                                if g.s[2] == 1 {
                                    let xs = &x[x_off + iw0..x_off + iw0 + (whi - wlo)];
                                    let ys = &mut chunk[y_off + wlo..y_off + whi];
                                    for (yv, xv) in ys.iter_mut().zip(xs) {
                                        *yv += wv * xv;
                                    }
                                } else {
                                    for (t, ow) in (wlo..whi).enumerate() {
                                        chunk[y_off + ow] += wv * x[x_off + iw0 + t * g.s[2]];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    y
}

/// Adjoint application: scatter gy back through the weights.
fn backward_input_raw(gy: &[f64], w: &[f64], g: &Geom) -> Vec<f64> {
    let in_plane = g.in_plane();
    let out_plane = g.out_plane();
    let mut gx = vec![0.0; g.n * g.c_in * in_plane];
    let k_vol = g.k[0] * g.k[1] * g.k[2];
    gx.par_chunks_mut(in_plane).enumerate().for_each(|(idx, chunk)| {
        let n = idx / g.c_in;
        let ci = idx % g.c_in;
        for co in 0..g.c_out {
            let gy_base = (n * g.c_out + co) * out_plane;
            let w_base = (co * g.c_in + ci) * k_vol;
            for kd in 0..g.k[0] {
                let (dlo, dhi) = valid_range(g.out_d[0], g.in_d[0], g.s[0], g.p[0], kd);
                for kh in 0..g.k[1] {
                    let (hlo, hhi) = valid_range(g.out_d[1], g.in_d[1], g.s[1], g.p[1], kh);
                    for kw in 0..g.k[2] {
                        let (wlo, whi) = valid_range(g.out_d[2], g.in_d[2], g.s[2], g.p[2], kw);
                        if wlo >= whi {
                            continue;
                        }
                        let wv = w[w_base + (kd * g.k[1] + kh) * g.k[2] + kw];
                        let iw0 = wlo * g.s[2] + kw - g.p[2];
                        for od in dlo..dhi {
                            let id = od * g.s[0] + kd - g.p[0];
                            for oh in hlo..hhi {
                                let ih = oh * g.s[1] + kh - g.p[1];
                                let gy_off = gy_base + (od * g.out_d[1] + oh) * g.out_d[2];
                                let gx_off = (id * g.in_d[1] + ih) * g.in_d[2];
                                for (t, ow) in (wlo..whi).enumerate() {
                                    chunk[gx_off + iw0 + t * g.s[2]] += wv * gy[gy_off + ow];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    gx
}

/// Weight gradient: correlate input with the output gradient.
fn backward_weights_raw(x: &[f64], gy: &[f64], g: &Geom) -> Vec<f64> {
    let in_plane = g.in_plane();
    let out_plane = g.out_plane();
    let k_vol = g.k[0] * g.k[1] * g.k[2];
    let mut gw = vec![0.0; g.c_out * g.c_in * k_vol];
    gw.par_chunks_mut(g.c_in * k_vol)
        .enumerate()
        .for_each(|(co, chunk)| {
            for n in 0..g.n {
                let gy_base = (n * g.c_out + co) * out_plane;
                for ci in 0..g.c_in {
                    let x_base = (n * g.c_in + ci) * in_plane;
                    for kd in 0..g.k[0] {
                        let (dlo, dhi) = valid_range(g.out_d[0], g.in_d[0], g.s[0], g.p[0], kd);
                        for kh in 0..g.k[1] {
                            let (hlo, hhi) =
                                valid_range(g.out_d[1], g.in_d[1], g.s[1], g.p[1], kh);
                            for kw in 0..g.k[2] {
                                let (wlo, whi) =
                                    valid_range(g.out_d[2], g.in_d[2], g.s[2], g.p[2], kw);
                                if wlo >= whi {
                                    continue;
                                }
                                let iw0 = wlo * g.s[2] + kw - g.p[2];
                                let mut acc = 0.0;
                                for od in dlo..dhi {
                                    let id = od * g.s[0] + kd - g.p[0];
                                    for oh in hlo..hhi {
                                        let ih = oh * g.s[1] + kh - g.p[1];
                                        let x_off =
                                            x_base + (id * g.in_d[1] + ih) * g.in_d[2];
                                        let gy_off =
                                            gy_base + (od * g.out_d[1] + oh) * g.out_d[2];
                                        if g.s[2] == 1 {
                                            let xs =
                                                &x[x_off + iw0..x_off + iw0 + (whi - wlo)];
                                            let gys = &gy[gy_off + wlo..gy_off + whi];
                                            for (xv, gv) in xs.iter().zip(gys) {
                                                acc += xv * gv;
                                            }
                                        } else {
                                            for (t, ow) in (wlo..whi).enumerate() {
                                                acc += x[x_off + iw0 + t * g.s[2]]
                                                    * gy[gy_off + ow];
                                            }
                                        }
                                    }
                                }
                                chunk[ci * k_vol + (kd * g.k[1] + kh) * g.k[2] + kw] += acc;
                            }
                        }
                    }
                }
            }
        });
    gw
}

/// 2D or 3D convolution layer. Weights are stored `[C_out, C_in, k(, k), k]`
/// in both directions; the transposed layer applies the adjoint map, taking
/// `C_out` channels in and producing `C_in` channels out.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub weights: Tensor,
    pub bias: Vec<f64>,
    pub stride: usize,
    pub padding: usize,
    pub transposed: bool,
    /// Target spatial extents for a transposed layer. Defaults to
    /// `input * stride` per axis, which inverts the ceil-mode stride map;
    /// recorded explicitly when mirroring an encoder with odd extents.
    pub output_size: Option<Vec<usize>>,
}

impl ConvLayer {
    /// Zero-initialized forward convolution with cubic kernel of the given
    /// spatial rank (2 or 3).
    pub fn new(c_in: usize, c_out: usize, kernel: usize, rank: usize, stride: usize, padding: usize) -> Self {
        assert!(rank == 2 || rank == 3, "kernel rank must be 2 or 3");
        let mut shape = vec![c_out, c_in];
        shape.extend(std::iter::repeat(kernel).take(rank));
        Self {
            weights: Tensor::zeros(shape),
            bias: vec![0.0; c_out],
            stride,
            padding,
            transposed: false,
            output_size: None,
        }
    }

    pub fn new_transposed(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        rank: usize,
        stride: usize,
        padding: usize,
        output_size: Option<Vec<usize>>,
    ) -> Self {
        let mut layer = Self::new(c_in, c_out, kernel, rank, stride, padding);
        layer.transposed = true;
        layer.bias = vec![0.0; c_in];
        layer.output_size = output_size;
        layer
    }

    /// Spatial rank of the kernel (2 or 3).
    pub fn rank(&self) -> usize {
        self.weights.shape.len() - 2
    }

    pub fn kernel(&self) -> usize {
        *self.weights.shape.last().unwrap()
    }

    /// Channel count the layer consumes.
    pub fn map_in_channels(&self) -> usize {
        if self.transposed {
            self.weights.shape[0]
        } else {
            self.weights.shape[1]
        }
    }

    /// Channel count the layer produces.
    pub fn map_out_channels(&self) -> usize {
        if self.transposed {
            self.weights.shape[1]
        } else {
            self.weights.shape[0]
        }
    }

    /// Glorot-uniform init in +/- sqrt(6 / (fan_in + fan_out)).
    pub fn init_glorot(&mut self, rng: &mut impl Rng) {
        let k_vol: usize = self.weights.shape[2..].iter().product();
        let fan_in = self.weights.shape[1] * k_vol;
        let fan_out = self.weights.shape[0] * k_vol;
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in &mut self.weights.data {
            *w = rng.gen_range(-bound..bound);
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.numel() + self.bias.len()
    }

    /// Geometry of the equivalent forward convolution for the given layer
    /// input shape `[N, C, spatial...]`.
    fn geom(&self, input_shape: &[usize]) -> Result<Geom> {
        let rank = self.rank();
        if input_shape.len() != rank + 2 {
            return Err(Error::ShapeMismatch(format!(
                "expected [N, C, {} spatial dims], got {:?}",
                rank, input_shape
            )));
        }
        if input_shape[1] != self.map_in_channels() {
            return Err(Error::ShapeMismatch(format!(
                "layer takes {} channels, input has {}",
                self.map_in_channels(),
                input_shape[1]
            )));
        }
        let canon = |sp: &[usize]| -> [usize; 3] {
            if sp.len() == 2 {
                [1, sp[0], sp[1]]
            } else {
                [sp[0], sp[1], sp[2]]
            }
        };
        let k3 = if rank == 2 {
            [1, self.kernel(), self.kernel()]
        } else {
            [self.kernel(); 3]
        };
        let s3 = if rank == 2 {
            [1, self.stride, self.stride]
        } else {
            [self.stride; 3]
        };
        let p3 = if rank == 2 {
            [0, self.padding, self.padding]
        } else {
            [self.padding; 3]
        };
        let spatial = &input_shape[2..];
        let (conv_in, conv_out): ([usize; 3], [usize; 3]) = if self.transposed {
            // The layer input lives on the conv OUTPUT side of the map.
            let target: Vec<usize> = match &self.output_size {
                Some(t) => {
                    if t.len() != rank {
                        return Err(Error::ShapeMismatch(
                            "output_size rank does not match kernel rank".into(),
                        ));
                    }
                    t.clone()
                }
                None => spatial.iter().map(|&d| d * self.stride).collect(),
            };
            let ci = canon(&target);
            let co = canon(spatial);
            for a in 0..3 {
                let expect = out_size(ci[a], k3[a], s3[a], p3[a])?;
                if expect != co[a] {
                    return Err(Error::ShapeMismatch(format!(
                        "transposed conv output size {:?} is inconsistent with input {:?} (axis {a}: conv({}) = {expect} != {})",
                        target, spatial, ci[a], co[a]
                    )));
                }
            }
            (ci, co)
        } else {
            let ci = canon(spatial);
            let mut co = [0usize; 3];
            for a in 0..3 {
                co[a] = out_size(ci[a], k3[a], s3[a], p3[a])?;
            }
            (ci, co)
        };
        Ok(Geom {
            n: input_shape[0],
            c_in: self.weights.shape[1],
            c_out: self.weights.shape[0],
            in_d: conv_in,
            out_d: conv_out,
            k: k3,
            s: s3,
            p: p3,
        })
    }

    /// Output shape `[N, C, spatial...]` for a given input shape.
    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let g = self.geom(input_shape)?;
        let rank = self.rank();
        let (c, d) = if self.transposed {
            (g.c_in, g.in_d)
        } else {
            (g.c_out, g.out_d)
        };
        let mut shape = vec![input_shape[0], c];
        shape.extend_from_slice(&d[3 - rank..]);
        Ok(shape)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let g = self.geom(&x.shape)?;
        let shape = self.output_shape(&x.shape)?;
        let data = if self.transposed {
            let mut data = backward_input_raw(&x.data, &self.weights.data, &g);
            let plane = g.in_plane();
            for (idx, chunk) in data.chunks_mut(plane).enumerate() {
                let b = self.bias[idx % g.c_in];
                for v in chunk {
                    *v += b;
                }
            }
            data
        } else {
            forward_raw(&x.data, &self.weights.data, Some(&self.bias), &g)
        };
        Ok(Tensor::from_vec(shape, data))
    }

    /// Exact gradients of the forward map: `(grad_x, grad_w, grad_b)`.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Vec<f64>)> {
        let g = self.geom(&x.shape)?;
        let expect = self.output_shape(&x.shape)?;
        if grad_out.shape != expect {
            return Err(Error::ShapeMismatch(format!(
                "grad_out shape {:?}, expected {:?}",
                grad_out.shape, expect
            )));
        }
        let (gx_data, gw_data) = if self.transposed {
            // layer: y = A^T x + b, so dx = A gy and the weight gradient
            // correlates gy (conv-input side) with x (conv-output side).
            let gx = forward_raw(&grad_out.data, &self.weights.data, None, &g);
            let gw = backward_weights_raw(&grad_out.data, &x.data, &g);
            (gx, gw)
        } else {
            let gx = backward_input_raw(&grad_out.data, &self.weights.data, &g);
            let gw = backward_weights_raw(&x.data, &grad_out.data, &g);
            (gx, gw)
        };
        let n_bias = self.bias.len();
        let plane: usize = grad_out.data.len() / (g.n * n_bias);
        let mut gb = vec![0.0; n_bias];
        for (idx, chunk) in grad_out.data.chunks(plane).enumerate() {
            gb[idx % n_bias] += chunk.iter().sum::<f64>();
        }
        Ok((
            Tensor::from_vec(x.shape.clone(), gx_data),
            Tensor::from_vec(self.weights.shape.clone(), gw_data),
            gb,
        ))
    }
}
