//! 2-D convolution over `[batch, height, width, channels]` tensors.
//!
//! The forward pass gathers receptive fields into a patch matrix and runs a
//! single matrix product against the `[kh * kw * c_in, c_out]` kernel.
//! [`conv2d_direct`] is the plain sliding-window loop kept as a reference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::LayerGrads;
use crate::error::{Error, Result};
use crate::tensor::{matmul_slices, transpose_slice, Real, Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero padding so that stride 1 keeps the spatial extent. When the
    /// total padding is odd the extra row/column goes bottom/right.
    Same,
    Valid,
}

/// Output extent and leading padding along one spatial axis.
pub fn conv_output_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            Ok((out, total / 2))
        }
        Padding::Valid => {
            if input < kernel {
                return Err(Error::shape(format!(
                    "input extent {input} is smaller than kernel extent {kernel}"
                )));
            }
            Ok(((input - kernel) / stride + 1, 0))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2D<T: Real = f32> {
    /// `[kh, kw, c_in, c_out]`
    pub weights: Tensor<T>,
    /// `[c_out]`
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: Padding,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Geometry {
    batch: usize,
    in_h: usize,
    in_w: usize,
    in_c: usize,
    kh: usize,
    kw: usize,
    out_c: usize,
    out_h: usize,
    out_w: usize,
    pad_top: usize,
    pad_left: usize,
    stride: usize,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.kh * self.kw * self.in_c
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input coordinate of kernel tap `k` at output index `o`, if inside.
    #[inline]
    fn source(&self, o: usize, k: usize, pad: usize, extent: usize) -> Option<usize> {
        let v = (o * self.stride + k).checked_sub(pad)?;
        (v < extent).then_some(v)
    }
}

#[derive(Debug, Clone)]
pub struct ConvContext<T: Real> {
    geometry: Geometry,
    patches: Vec<T>,
    output: Tensor<T>,
}

impl<T: Real> Conv2D<T> {
    pub fn new(
        weights: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
        padding: Padding,
        activation: Activation,
    ) -> Result<Self> {
        let &[kh, kw, _, out_c] = weights.dims() else {
            return Err(Error::shape(format!(
                "conv kernel must be [kh, kw, c_in, c_out], got {}",
                weights.shape()
            )));
        };
        if bias.dims() != [out_c] {
            return Err(Error::shape(format!(
                "conv bias {} does not match {out_c} output channels",
                bias.shape()
            )));
        }
        if stride == 0 || kh == 0 || kw == 0 {
            return Err(Error::shape("conv stride and kernel extents must be positive"));
        }
        if activation == Activation::Softmax {
            return Err(Error::shape("softmax is only supported on dense outputs"));
        }
        Ok(Conv2D {
            weights,
            bias,
            stride,
            padding,
            activation,
        })
    }

    pub fn kernel_dims(&self) -> (usize, usize, usize, usize) {
        let d = self.weights.dims();
        (d[0], d[1], d[2], d[3])
    }

    /// Output `[h, w, c]` for an input `[h, w, c]`.
    pub fn output_dims(&self, input: &[usize]) -> Result<[usize; 3]> {
        let g = self.geometry(1, input)?;
        Ok([g.out_h, g.out_w, g.out_c])
    }

    fn geometry(&self, batch: usize, hwc: &[usize]) -> Result<Geometry> {
        let (kh, kw, in_c, out_c) = self.kernel_dims();
        let &[in_h, in_w, c] = hwc else {
            return Err(Error::shape(format!("conv input must be [h, w, c], got {hwc:?}")));
        };
        if c != in_c {
            return Err(Error::shape(format!(
                "conv expects {in_c} input channels, got {c}"
            )));
        }
        let (out_h, pad_top) = conv_output_extent(in_h, kh, self.stride, self.padding)?;
        let (out_w, pad_left) = conv_output_extent(in_w, kw, self.stride, self.padding)?;
        Ok(Geometry {
            batch,
            in_h,
            in_w,
            in_c,
            kh,
            kw,
            out_c,
            out_h,
            out_w,
            pad_top,
            pad_left,
            stride: self.stride,
        })
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, ConvContext<T>)> {
        let dims = input.dims();
        if dims.len() != 4 {
            return Err(Error::shape(format!(
                "conv input must be [b, h, w, c], got {}",
                input.shape()
            )));
        }
        let g = self.geometry(dims[0], &dims[1..])?;
        let patches = im2col(input.data(), &g);
        let rows = g.batch * g.positions();
        let mut z = matmul_slices(&patches, self.weights.data(), rows, g.patch_len(), g.out_c);
        for row in z.chunks_mut(g.out_c) {
            for (v, &b) in row.iter_mut().zip(self.bias.data()) {
                *v = *v + b;
            }
        }
        let z = Tensor::from_parts(Shape::new(vec![g.batch, g.out_h, g.out_w, g.out_c])?, z);
        let output = self.activation.apply(z)?;
        Ok((
            output.clone(),
            ConvContext {
                geometry: g,
                patches,
                output,
            },
        ))
    }

    pub fn backward(
        &self,
        ctx: &ConvContext<T>,
        upstream: &Tensor<T>,
        need_input_grad: bool,
        need_param_grads: bool,
    ) -> Result<LayerGrads<T>> {
        let g = &ctx.geometry;
        let dz = self.activation.backward(&ctx.output, upstream)?;
        let rows = g.batch * g.positions();
        let k = g.patch_len();
        let mut grads = LayerGrads::default();

        if need_param_grads {
            let patches_t = transpose_slice(&ctx.patches, rows, k);
            let dw = matmul_slices(&patches_t, dz.data(), k, rows, g.out_c);
            let mut db = vec![T::zero(); g.out_c];
            for row in dz.data().chunks(g.out_c) {
                for (acc, &v) in db.iter_mut().zip(row) {
                    *acc = *acc + v;
                }
            }
            grads.weights = Some(Tensor::from_parts(self.weights.shape().clone(), dw));
            grads.bias = Some(Tensor::from_parts(self.bias.shape().clone(), db));
        }
        if need_input_grad {
            let w_t = transpose_slice(self.weights.data(), k, g.out_c);
            let dpatches = matmul_slices(dz.data(), &w_t, rows, g.out_c, k);
            let dx = col2im(&dpatches, g);
            grads.input = Some(Tensor::from_parts(
                Shape::new(vec![g.batch, g.in_h, g.in_w, g.in_c])?,
                dx,
            ));
        }
        Ok(grads)
    }
}

/// Patch matrix `[batch * out_h * out_w, kh * kw * c_in]`; columns ordered
/// `(dy, dx, channel)` to match the kernel layout. Padding taps are zero.
fn im2col<T: Real>(input: &[T], g: &Geometry) -> Vec<T> {
    let k = g.patch_len();
    let per_sample_in = g.in_h * g.in_w * g.in_c;
    let per_sample_out = g.positions() * k;
    let mut patches = vec![T::zero(); g.batch * per_sample_out];
    patches
        .par_chunks_mut(per_sample_out)
        .zip(input.par_chunks(per_sample_in))
        .for_each(|(dst, src)| {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let row = &mut dst[(oy * g.out_w + ox) * k..][..k];
                    for dy in 0..g.kh {
                        let Some(iy) = g.source(oy, dy, g.pad_top, g.in_h) else {
                            continue;
                        };
                        for dx in 0..g.kw {
                            let Some(ix) = g.source(ox, dx, g.pad_left, g.in_w) else {
                                continue;
                            };
                            let from = (iy * g.in_w + ix) * g.in_c;
                            let to = (dy * g.kw + dx) * g.in_c;
                            row[to..to + g.in_c].copy_from_slice(&src[from..from + g.in_c]);
                        }
                    }
                }
            }
        });
    patches
}

/// Adjoint of [`im2col`]: scatter-add patch gradients back onto the input.
fn col2im<T: Real>(dpatches: &[T], g: &Geometry) -> Vec<T> {
    let k = g.patch_len();
    let per_sample_in = g.in_h * g.in_w * g.in_c;
    let per_sample_out = g.positions() * k;
    let mut dx = vec![T::zero(); g.batch * per_sample_in];
    dx.par_chunks_mut(per_sample_in)
        .zip(dpatches.par_chunks(per_sample_out))
        .for_each(|(dst, src)| {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let row = &src[(oy * g.out_w + ox) * k..][..k];
                    for dy in 0..g.kh {
                        let Some(iy) = g.source(oy, dy, g.pad_top, g.in_h) else {
                            continue;
                        };
                        for dx_ in 0..g.kw {
                            let Some(ix) = g.source(ox, dx_, g.pad_left, g.in_w) else {
                                continue;
                            };
                            let to = (iy * g.in_w + ix) * g.in_c;
                            let from = (dy * g.kw + dx_) * g.in_c;
                            for (d, &s) in dst[to..to + g.in_c].iter_mut().zip(&row[from..from + g.in_c]) {
                                *d = *d + s;
                            }
                        }
                    }
                }
            }
        });
    dx
}

/// Direct sliding-window convolution without activation. Reference
/// implementation for the patch-matrix path.
pub fn conv2d_direct<T: Real>(input: &Tensor<T>, layer: &Conv2D<T>) -> Result<Tensor<T>> {
    let dims = input.dims();
    if dims.len() != 4 {
        return Err(Error::shape("conv input must be rank 4"));
    }
    let g = layer.geometry(dims[0], &dims[1..])?;
    let x = input.data();
    let w = layer.weights.data();
    let mut out = Vec::with_capacity(g.batch * g.positions() * g.out_c);
    for b in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                for o in 0..g.out_c {
                    let mut acc = layer.bias.data()[o];
                    for dy in 0..g.kh {
                        for dx in 0..g.kw {
                            let (Some(iy), Some(ix)) = (
                                g.source(oy, dy, g.pad_top, g.in_h),
                                g.source(ox, dx, g.pad_left, g.in_w),
                            ) else {
                                continue;
                            };
                            for i in 0..g.in_c {
                                let xv = x[((b * g.in_h + iy) * g.in_w + ix) * g.in_c + i];
                                let wv = w[((dy * g.kw + dx) * g.in_c + i) * g.out_c + o];
                                acc = acc + xv * wv;
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    Tensor::from_vec(&[g.batch, g.out_h, g.out_w, g.out_c], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(kh: usize, kw: usize, cin: usize, cout: usize, w: f64, b: f64, pad: Padding) -> Conv2D<f64> {
        Conv2D::new(
            Tensor::full(&[kh, kw, cin, cout], w).unwrap(),
            Tensor::full(&[cout], b).unwrap(),
            1,
            pad,
            Activation::Linear,
        )
        .unwrap()
    }

    #[test]
    fn identity_kernel() {
        let conv = layer(1, 1, 1, 1, 1.0, 0.0, Padding::Same);
        let x = Tensor::from_vec(&[1, 2, 3, 1], vec![1.0, -2.0, 3.0, 4.0, 5.0, 6.5]).unwrap();
        assert_eq!(conv.forward(&x).unwrap().0, x);
    }

    #[test]
    fn all_ones_same_padding() {
        let conv = layer(3, 3, 1, 1, 1.0, 0.0, Padding::Same);
        let x = Tensor::full(&[1, 3, 3, 1], 1.0).unwrap();
        let y = conv.forward(&x).unwrap().0;
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
        assert_eq!(conv2d_direct(&x, &conv).unwrap(), y);
    }

    #[test]
    fn zero_weights_give_bias() {
        let conv = layer(3, 3, 2, 3, 0.0, 0.25, Padding::Same);
        let x = Tensor::full(&[2, 4, 4, 2], 9.0).unwrap();
        assert!(conv.forward(&x).unwrap().0.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let conv = layer(3, 3, 2, 1, 1.0, 0.0, Padding::Same);
        let x = Tensor::full(&[1, 4, 4, 3], 1.0).unwrap();
        assert!(matches!(conv.forward(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn same_padding_extents() {
        assert_eq!(conv_output_extent(7, 3, 1, Padding::Same).unwrap(), (7, 1));
        assert_eq!(conv_output_extent(8, 3, 2, Padding::Same).unwrap(), (4, 0));
        // total padding 1 goes to the bottom/right
        assert_eq!(conv_output_extent(7, 2, 1, Padding::Same).unwrap(), (7, 0));
        assert_eq!(conv_output_extent(7, 3, 2, Padding::Valid).unwrap(), (3, 0));
        assert!(conv_output_extent(2, 3, 1, Padding::Valid).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let conv = layer(3, 3, 2, 2, 0.3, 0.1, Padding::Same);
        let x = Tensor::full(&[1, 4, 4, 2], 0.5).unwrap();
        let (y, ctx) = conv.forward(&x).unwrap();
        let grads = conv
            .backward(&ctx, &Tensor::zeros(y.dims()).unwrap(), true, true)
            .unwrap();
        for t in [grads.input, grads.weights, grads.bias] {
            assert!(t.unwrap().data().iter().all(|&v| v == 0.0));
        }
    }
}
