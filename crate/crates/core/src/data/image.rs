use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeMethod {
    #[default]
    Nearest,
    Bilinear,
}

/// Scale 0-255 values to `[0, 1]`.
pub fn normalize(image: &Tensor) -> Tensor {
    image.map(|v| v / 255.0)
}

/// Resample an `[h, w, c]` image. Nearest maps output index `i` to source
/// index `floor(i * src / dst)`; bilinear samples at pixel centres.
pub fn resize(image: &Tensor, target_h: usize, target_w: usize, method: ResizeMethod) -> Result<Tensor> {
    let &[h, w, c] = image.dims() else {
        return Err(Error::shape(format!("expected an [h, w, c] image, got {}", image.shape())));
    };
    if target_h == 0 || target_w == 0 {
        return Err(Error::shape("resize targets must be positive"));
    }
    if (h, w) == (target_h, target_w) {
        return Ok(image.clone());
    }
    let src = image.data();
    let at = |y: usize, x: usize, ch: usize| src[(y * w + x) * c + ch];
    let mut out = Vec::with_capacity(target_h * target_w * c);
    match method {
        ResizeMethod::Nearest => {
            for y in 0..target_h {
                let sy = y * h / target_h;
                for x in 0..target_w {
                    let sx = x * w / target_w;
                    out.extend((0..c).map(|ch| at(sy, sx, ch)));
                }
            }
        }
        ResizeMethod::Bilinear => {
            let coord = |i: usize, src_len: usize, dst_len: usize| {
                let s = ((i as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5).clamp(0.0, (src_len - 1) as f64);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(src_len - 1);
                (lo, hi, (s - lo as f64) as f32)
            };
            for y in 0..target_h {
                let (y0, y1, fy) = coord(y, h, target_h);
                for x in 0..target_w {
                    let (x0, x1, fx) = coord(x, w, target_w);
                    out.extend((0..c).map(|ch| {
                        let top = at(y0, x0, ch) * (1.0 - fx) + at(y0, x1, ch) * fx;
                        let bottom = at(y1, x0, ch) * (1.0 - fx) + at(y1, x1, ch) * fx;
                        top * (1.0 - fy) + bottom * fy
                    }));
                }
            }
        }
    }
    Tensor::from_vec(&[target_h, target_w, c], out)
}

/// Convert between 1 and 3 channels. RGB to gray averages the channels;
/// gray to RGB replicates.
pub fn convert_channels(image: &Tensor, channels: usize) -> Result<Tensor> {
    let &[h, w, c] = image.dims() else {
        return Err(Error::shape(format!("expected an [h, w, c] image, got {}", image.shape())));
    };
    if c == channels {
        return Ok(image.clone());
    }
    let px = image.data().chunks(c);
    let data: Vec<f32> = match (c, channels) {
        (3, 1) => px.map(|p| (p[0] + p[1] + p[2]) / 3.0).collect(),
        (1, 3) => px.flat_map(|p| [p[0]; 3]).collect(),
        _ => return Err(Error::shape(format!("cannot convert {c} channels to {channels}"))),
    };
    Tensor::from_vec(&[h, w, channels], data)
}

/// Crop rows `y0..y1` and columns `x0..x1`.
pub fn crop(image: &Tensor, y0: usize, x0: usize, y1: usize, x1: usize) -> Result<Tensor> {
    let &[h, w, c] = image.dims() else {
        return Err(Error::shape("expected an [h, w, c] image"));
    };
    if y0 >= y1 || x0 >= x1 || y1 > h || x1 > w {
        return Err(Error::Crop(format!(
            "window rows {y0}..{y1}, cols {x0}..{x1} is empty or outside {h}x{w}"
        )));
    }
    let src = image.data();
    let mut out = Vec::with_capacity((y1 - y0) * (x1 - x0) * c);
    for y in y0..y1 {
        out.extend_from_slice(&src[(y * w + x0) * c..(y * w + x1) * c]);
    }
    Tensor::from_vec(&[y1 - y0, x1 - x0, c], out)
}
