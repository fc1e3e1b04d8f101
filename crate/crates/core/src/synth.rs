//! Procedurally drawn glyph corpus: ten stroke shapes rendered with random
//! position, size, stroke width, contrast and background noise. Used as a
//! desk-scale stand-in for a gesture dataset.

use std::path::Path;

use rand::Rng;

use crate::data::{convert_channels, encode_ppm, Dataset, Sample};
use crate::error::{Error, Result};
use crate::parallel::{stream, StreamKind};
use crate::tensor::Tensor;

pub const GLYPH_CLASSES: usize = 10;

type Segment = ((f64, f64), (f64, f64));

fn segments(class: usize) -> Vec<Segment> {
    let s = |a: (f64, f64), b: (f64, f64)| (a, b);
    match class {
        0 => vec![s((-1.0, 0.0), (1.0, 0.0))],
        1 => vec![s((0.0, -1.0), (0.0, 1.0))],
        2 => vec![s((-1.0, 0.0), (1.0, 0.0)), s((0.0, -1.0), (0.0, 1.0))],
        3 => vec![s((-0.8, -0.8), (0.8, 0.8)), s((-0.8, 0.8), (0.8, -0.8))],
        4 => vec![
            s((-0.8, -0.8), (0.8, -0.8)),
            s((0.8, -0.8), (0.8, 0.8)),
            s((0.8, 0.8), (-0.8, 0.8)),
            s((-0.8, 0.8), (-0.8, -0.8)),
        ],
        7 => vec![
            s((0.0, -0.9), (0.9, 0.7)),
            s((0.9, 0.7), (-0.9, 0.7)),
            s((-0.9, 0.7), (0.0, -0.9)),
        ],
        8 => vec![s((-0.8, 0.8), (0.8, -0.8))],
        9 => vec![s((-1.0, -0.45), (1.0, -0.45)), s((-1.0, 0.45), (1.0, 0.45))],
        _ => vec![],
    }
}

fn segment_distance(p: (f64, f64), (a, b): Segment) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Distance in glyph units from `p` to the stroke of `class`.
fn glyph_distance(class: usize, p: (f64, f64)) -> f64 {
    let r = (p.0 * p.0 + p.1 * p.1).sqrt();
    match class {
        5 => (r - 0.6).max(0.0),
        6 => (r - 0.75).abs(),
        _ => segments(class)
            .into_iter()
            .map(|seg| segment_distance(p, seg))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Render one `size x size x 1` glyph with values in `[0, 1]`.
pub fn render_glyph<R: Rng>(class: usize, size: usize, rng: &mut R) -> Tensor {
    let n = size as f64;
    let jitter = n * 0.1;
    let cx = (n - 1.0) / 2.0 + rng.random_range(-jitter..=jitter);
    let cy = (n - 1.0) / 2.0 + rng.random_range(-jitter..=jitter);
    let radius = n * rng.random_range(0.25..0.36);
    let half_width = rng.random_range(0.9..1.6);
    let ink = rng.random_range(0.7..1.0);
    let noise = rng.random_range(0.0..0.15);
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let p = ((x as f64 - cx) / radius, (y as f64 - cy) / radius);
            let d = glyph_distance(class, p) * radius;
            // one-pixel linear ramp at the stroke edge
            let cover = (half_width + 0.5 - d).clamp(0.0, 1.0);
            let bg = noise * rng.random::<f64>();
            data.push((bg + (ink - bg) * cover) as f32);
        }
    }
    Tensor::from_vec(&[size, size, 1], data).expect("size is positive")
}

/// `per_class` glyphs for each of the ten classes, named `a`..`j`, rendered
/// at `size x size` with `channels` (1 or 3) channels.
pub fn glyph_dataset(per_class: usize, size: usize, channels: usize, seed: u64) -> Result<Dataset> {
    if size < 8 {
        return Err(Error::input("glyphs need at least 8x8 pixels"));
    }
    let mut samples = Vec::with_capacity(per_class * GLYPH_CLASSES);
    for class in 0..GLYPH_CLASSES {
        for i in 0..per_class {
            let mut rng = stream(seed, StreamKind::Synthetic, class as u64, i as u64);
            let image = convert_channels(&render_glyph(class, size, &mut rng), channels)?;
            samples.push(Sample {
                image,
                label: class,
                source_path: format!("synthetic/{}/{i:04}", class_name(class)),
            });
        }
    }
    Dataset::new(samples, (0..GLYPH_CLASSES).map(class_name).collect())
}

fn class_name(class: usize) -> String {
    char::from(b'a' + class as u8).to_string()
}

/// Write a dataset as `<root>/<class>/<nnnn>.ppm`, quantizing to 8 bits.
pub fn write_ppm_tree(dataset: &Dataset, root: &Path) -> Result<()> {
    for name in &dataset.class_names {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for (i, s) in dataset.samples.iter().enumerate() {
        let rgb = convert_channels(&s.image, 3)?.map(|v| v * 255.0);
        let path = root.join(&dataset.class_names[s.label]).join(format!("{i:05}.ppm"));
        std::fs::write(&path, encode_ppm(&rgb)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_shape_and_determinism() {
        let a = glyph_dataset(3, 16, 1, 5).unwrap();
        assert_eq!(a.len(), 30);
        assert_eq!(a.class_names, vec!["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]);
        assert_eq!(a, glyph_dataset(3, 16, 1, 5).unwrap());
        assert_ne!(a, glyph_dataset(3, 16, 1, 6).unwrap());
        for s in &a.samples {
            assert_eq!(s.image.dims(), &[16, 16, 1]);
            assert!(s.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn classes_render_differently() {
        let mut means = Vec::new();
        for c in 0..GLYPH_CLASSES {
            let mut rng = stream(0, StreamKind::Synthetic, 0, 0);
            means.push(render_glyph(c, 32, &mut rng));
        }
        for i in 0..GLYPH_CLASSES {
            for j in i + 1..GLYPH_CLASSES {
                assert_ne!(means[i], means[j], "classes {i} and {j}");
            }
        }
    }
}
