use rayon::prelude::*;

use super::LayerGrads;
use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2D {
    pub pool_h: usize,
    pub pool_w: usize,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct PoolContext {
    input_dims: Vec<usize>,
    output_dims: Vec<usize>,
    /// Flat input index of the winning element for every output element.
    argmax: Vec<usize>,
}

impl PoolContext {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

impl MaxPool2D {
    pub fn new(pool_h: usize, pool_w: usize, stride: usize) -> Result<Self> {
        if pool_h == 0 || pool_w == 0 || stride == 0 {
            return Err(Error::shape("pool window and stride must be positive"));
        }
        Ok(MaxPool2D {
            pool_h,
            pool_w,
            stride,
        })
    }

    pub fn output_dims(&self, hwc: &[usize]) -> Result<[usize; 3]> {
        let &[h, w, c] = hwc else {
            return Err(Error::shape(format!("pool input must be [h, w, c], got {hwc:?}")));
        };
        if h < self.pool_h || w < self.pool_w {
            return Err(Error::shape(format!(
                "pool window {}x{} exceeds input {h}x{w}",
                self.pool_h, self.pool_w
            )));
        }
        Ok([
            (h - self.pool_h) / self.stride + 1,
            (w - self.pool_w) / self.stride + 1,
            c,
        ])
    }

    /// Ties resolve to the lowest flat index in the window.
    pub fn forward<T: Real>(&self, input: &Tensor<T>) -> Result<(Tensor<T>, PoolContext)> {
        let dims = input.dims();
        if dims.len() != 4 {
            return Err(Error::shape(format!(
                "pool input must be [b, h, w, c], got {}",
                input.shape()
            )));
        }
        let [oh, ow, c] = self.output_dims(&dims[1..])?;
        let (b, h, w) = (dims[0], dims[1], dims[2]);
        let per_in = h * w * c;
        let per_out = oh * ow * c;
        let x = input.data();

        let mut out = vec![T::zero(); b * per_out];
        let mut argmax = vec![0usize; b * per_out];
        out.par_chunks_mut(per_out)
            .zip(argmax.par_chunks_mut(per_out))
            .enumerate()
            .for_each(|(n, (out, arg))| {
                let base = n * per_in;
                for oy in 0..oh {
                    for ox in 0..ow {
                        for ch in 0..c {
                            let mut best = T::neg_infinity();
                            let mut best_at = usize::MAX;
                            for dy in 0..self.pool_h {
                                for dx in 0..self.pool_w {
                                    let iy = oy * self.stride + dy;
                                    let ix = ox * self.stride + dx;
                                    let at = base + (iy * w + ix) * c + ch;
                                    if best_at == usize::MAX || x[at] > best {
                                        best = x[at];
                                        best_at = at;
                                    }
                                }
                            }
                            let o = (oy * ow + ox) * c + ch;
                            out[o] = best;
                            arg[o] = best_at;
                        }
                    }
                }
            });
        let output_dims = vec![b, oh, ow, c];
        Ok((
            Tensor::from_parts(Shape::new(output_dims.clone())?, out),
            PoolContext {
                input_dims: dims.to_vec(),
                output_dims,
                argmax,
            },
        ))
    }

    /// Routes each upstream element to its recorded argmax.
    pub fn backward<T: Real>(&self, ctx: &PoolContext, upstream: &Tensor<T>) -> Result<LayerGrads<T>> {
        if upstream.dims() != ctx.output_dims.as_slice() {
            return Err(Error::Contract(format!(
                "pool upstream {} does not match forward output {:?}",
                upstream.shape(),
                ctx.output_dims
            )));
        }
        let shape = Shape::new(ctx.input_dims.clone())?;
        let mut dx = vec![T::zero(); shape.numel()];
        for (&at, &g) in ctx.argmax.iter().zip(upstream.data()) {
            dx[at] = dx[at] + g;
        }
        Ok(LayerGrads {
            input: Some(Tensor::from_parts(shape, dx)),
            ..Default::default()
        })
    }
}
