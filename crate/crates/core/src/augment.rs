//! Label-preserving image transforms on `[h, w, c]` tensors: horizontal
//! flip, integer shifts and rotation about the image centre, plus a seeded
//! random pipeline applying them in the order flip, shift, rotate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Nearest,
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    /// Largest shift along each axis as a fraction of that axis' extent.
    pub max_shift_frac: f64,
    pub max_rotate_deg: f64,
    pub fill_value: f32,
    pub interpolation: Interpolation,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            flip_prob: 0.5,
            max_shift_frac: 0.1,
            max_rotate_deg: 15.0,
            fill_value: 0.0,
            interpolation: Interpolation::Nearest,
        }
    }
}

impl AugmentConfig {
    /// A configuration under which [`random_augment`] is the identity.
    pub fn disabled() -> Self {
        AugmentConfig {
            flip_prob: 0.0,
            max_shift_frac: 0.0,
            max_rotate_deg: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Config(format!("flip_prob {} is outside [0, 1]", self.flip_prob)));
        }
        if !(0.0..1.0).contains(&self.max_shift_frac) {
            return Err(Error::Config(format!(
                "max_shift_frac {} is outside [0, 1)",
                self.max_shift_frac
            )));
        }
        if !(self.max_rotate_deg >= 0.0 && self.max_rotate_deg.is_finite()) {
            return Err(Error::Config(format!(
                "max_rotate_deg {} must be finite and >= 0",
                self.max_rotate_deg
            )));
        }
        if !self.fill_value.is_finite() {
            return Err(Error::Config("fill_value must be finite".into()));
        }
        Ok(())
    }
}

fn hwc(image: &Tensor) -> Result<(usize, usize, usize)> {
    match image.dims() {
        &[h, w, c] => Ok((h, w, c)),
        _ => Err(Error::shape(format!("expected an [h, w, c] image, got {}", image.shape()))),
    }
}

/// Reverse the column order.
pub fn hflip(image: &Tensor) -> Result<Tensor> {
    let (h, w, c) = hwc(image)?;
    let src = image.data();
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in (0..w).rev() {
            let at = (y * w + x) * c;
            out.extend_from_slice(&src[at..at + c]);
        }
    }
    Tensor::from_vec(image.dims(), out)
}

/// Translate content right by `dx` and down by `dy` pixels. Vacated pixels
/// take `fill`; content moved past the border is dropped.
pub fn shift(image: &Tensor, dx: i64, dy: i64, fill: f32) -> Result<Tensor> {
    let (h, w, c) = hwc(image)?;
    let src = image.data();
    let mut out = vec![fill; src.len()];
    for y in 0..h {
        let sy = y as i64 - dy;
        if sy < 0 || sy >= h as i64 {
            continue;
        }
        for x in 0..w {
            let sx = x as i64 - dx;
            if sx < 0 || sx >= w as i64 {
                continue;
            }
            let from = (sy as usize * w + sx as usize) * c;
            let to = (y * w + x) * c;
            out[to..to + c].copy_from_slice(&src[from..from + c]);
        }
    }
    Tensor::from_vec(image.dims(), out)
}

/// Exact `(cos, sin)` for multiples of 90 degrees.
fn cos_sin(degrees: f64) -> (f64, f64) {
    let turn = degrees.rem_euclid(360.0);
    if turn % 90.0 == 0.0 {
        match (turn / 90.0) as u32 {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let r = turn.to_radians();
        (r.cos(), r.sin())
    }
}

/// Rotate counter-clockwise (as displayed, rows growing downwards) about the
/// image centre. Output extents equal input extents; samples falling
/// outside the source take `fill`.
pub fn rotate(image: &Tensor, degrees: f64, interpolation: Interpolation, fill: f32) -> Result<Tensor> {
    let (h, w, c) = hwc(image)?;
    if !degrees.is_finite() {
        return Err(Error::input("rotation angle must be finite"));
    }
    let (cos, sin) = cos_sin(degrees);
    if cos == 1.0 {
        return Ok(image.clone());
    }
    let src = image.data();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let pixel = |x: i64, y: i64, ch: usize| -> f32 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            fill
        } else {
            src[(y as usize * w + x as usize) * c + ch]
        }
    };
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in 0..w {
            let (ox, oy) = (x as f64 - cx, y as f64 - cy);
            let sx = cx + cos * ox - sin * oy;
            let sy = cy + sin * ox + cos * oy;
            match interpolation {
                Interpolation::Nearest => {
                    let (ix, iy) = (sx.round() as i64, sy.round() as i64);
                    out.extend((0..c).map(|ch| pixel(ix, iy, ch)));
                }
                Interpolation::Bilinear => {
                    let (x0, y0) = (sx.floor(), sy.floor());
                    let (fx, fy) = ((sx - x0) as f32, (sy - y0) as f32);
                    let (x0, y0) = (x0 as i64, y0 as i64);
                    out.extend((0..c).map(|ch| {
                        let top = pixel(x0, y0, ch) * (1.0 - fx) + pixel(x0 + 1, y0, ch) * fx;
                        let bottom = pixel(x0, y0 + 1, ch) * (1.0 - fx) + pixel(x0 + 1, y0 + 1, ch) * fx;
                        top * (1.0 - fy) + bottom * fy
                    }));
                }
            }
        }
    }
    Tensor::from_vec(image.dims(), out)
}

/// Parameters drawn for one [`random_augment`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub flip: bool,
    pub dx: i64,
    pub dy: i64,
    pub degrees: f64,
}

impl AugmentDraw {
    /// Always consumes the same number of draws, whatever the config.
    pub fn sample<R: Rng>(image_h: usize, image_w: usize, config: &AugmentConfig, rng: &mut R) -> Self {
        let flip = rng.random::<f64>() < config.flip_prob;
        let max_dx = (config.max_shift_frac * image_w as f64).floor() as i64;
        let max_dy = (config.max_shift_frac * image_h as f64).floor() as i64;
        let dx = rng.random_range(-max_dx..=max_dx);
        let dy = rng.random_range(-max_dy..=max_dy);
        let u: f64 = rng.random();
        let degrees = if config.max_rotate_deg > 0.0 {
            (2.0 * u - 1.0) * config.max_rotate_deg
        } else {
            0.0
        };
        AugmentDraw { flip, dx, dy, degrees }
    }

    pub fn apply(&self, image: &Tensor, config: &AugmentConfig) -> Result<Tensor> {
        let mut out = if self.flip { hflip(image)? } else { image.clone() };
        if self.dx != 0 || self.dy != 0 {
            out = shift(&out, self.dx, self.dy, config.fill_value)?;
        }
        if self.degrees != 0.0 {
            out = rotate(&out, self.degrees, config.interpolation, config.fill_value)?;
        }
        Ok(out)
    }
}

/// Draw flip, shift and rotation parameters from `rng` and apply them in
/// that order.
pub fn random_augment<R: Rng>(image: &Tensor, config: &AugmentConfig, rng: &mut R) -> Result<Tensor> {
    let (h, w, _) = hwc(image)?;
    AugmentDraw::sample(h, w, config, rng).apply(image, config)
}
