//! Hand-landmark files and keypoint-based cropping.
//!
//! Landmark JSON:
//!
//! ```json
//! {"image_width": 640, "image_height": 480,
//!  "points": [{"x": 101.5, "y": 220.0, "confidence": 0.93}, ...]}
//! ```

use serde::{Deserialize, Serialize};

use super::image::{crop, resize, ResizeMethod};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default margin around the keypoint hull, as a fraction of its larger side.
pub const DEFAULT_MARGIN: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    pub image_width: u32,
    pub image_height: u32,
    pub points: Vec<Keypoint>,
}

pub fn read_keypoints_json(bytes: &[u8]) -> Result<KeypointSet> {
    let set: KeypointSet =
        serde_json::from_slice(bytes).map_err(|e| Error::format(format!("keypoint file: {e}")))?;
    if set.points.is_empty() {
        return Err(Error::format("keypoint file has no points"));
    }
    if set.image_width == 0 || set.image_height == 0 {
        return Err(Error::format("keypoint file has a zero image extent"));
    }
    if set.points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::format("keypoint coordinates must be finite"));
    }
    Ok(set)
}

/// Pixel window `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

/// Axis-aligned hull of the points, grown by `margin_frac` of its larger
/// side on every edge and squared to that side about its centre, then
/// clamped to a `width x height` image.
pub fn crop_box(points: &[Keypoint], margin_frac: f64, width: usize, height: usize) -> Result<CropBox> {
    if points.is_empty() {
        return Err(Error::Crop("no keypoints".into()));
    }
    if !(margin_frac >= 0.0 && margin_frac.is_finite()) {
        return Err(Error::input(format!("margin {margin_frac} must be finite and >= 0")));
    }
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    let side = (max_x - min_x).max(max_y - min_y);
    let half = side * (0.5 + margin_frac);
    let (cx, cy) = ((min_x + max_x) / 2.0, (min_y + max_y) / 2.0);
    let clamp = |v: f64, hi: usize| v.clamp(0.0, hi as f64);
    let b = CropBox {
        x0: clamp((cx - half).floor(), width) as usize,
        x1: clamp((cx + half).ceil(), width) as usize,
        y0: clamp((cy - half).floor(), height) as usize,
        y1: clamp((cy + half).ceil(), height) as usize,
    };
    if b.x1 <= b.x0 || b.y1 <= b.y0 {
        return Err(Error::Crop(format!(
            "keypoint box is degenerate after clamping: {b:?}"
        )));
    }
    Ok(b)
}

/// Crop the hand region described by `kps` and resize it to
/// `target_h x target_w`. Keypoints are rescaled when the set was recorded
/// at a different resolution than `image`.
pub fn crop_from_keypoints(
    image: &Tensor,
    kps: &KeypointSet,
    margin_frac: f64,
    target_h: usize,
    target_w: usize,
    method: ResizeMethod,
) -> Result<Tensor> {
    let &[h, w, _] = image.dims() else {
        return Err(Error::shape(format!("expected an [h, w, c] image, got {}", image.shape())));
    };
    let sx = w as f64 / kps.image_width as f64;
    let sy = h as f64 / kps.image_height as f64;
    let points: Vec<Keypoint> = kps
        .points
        .iter()
        .map(|p| Keypoint {
            x: p.x * sx,
            y: p.y * sy,
            confidence: p.confidence,
        })
        .collect();
    let b = crop_box(&points, margin_frac, w, h)?;
    let window = crop(image, b.y0, b.x0, b.y1, b.x1)?;
    resize(&window, target_h, target_w, method)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Keypoint> {
        v.iter()
            .map(|&(x, y)| Keypoint {
                x,
                y,
                confidence: None,
            })
            .collect()
    }

    #[test]
    fn worked_box() {
        let b = crop_box(&pts(&[(10.0, 10.0), (20.0, 30.0)]), 0.0, 100, 100).unwrap();
        assert_eq!(b, CropBox { x0: 5, y0: 10, x1: 25, y1: 30 });
    }

    #[test]
    fn margin_grows_each_edge() {
        let b = crop_box(&pts(&[(40.0, 40.0), (60.0, 60.0)]), 0.25, 100, 100).unwrap();
        assert_eq!(b, CropBox { x0: 35, y0: 35, x1: 65, y1: 65 });
    }

    #[test]
    fn single_point_is_degenerate() {
        let err = crop_box(&pts(&[(5.0, 5.0)]), 0.0, 10, 10).unwrap_err();
        assert!(matches!(err, Error::Crop(_)));
    }

    #[test]
    fn full_span_is_whole_image() {
        let b = crop_box(&pts(&[(0.0, 0.0), (16.0, 16.0)]), 0.0, 16, 16).unwrap();
        assert_eq!(b, CropBox { x0: 0, y0: 0, x1: 16, y1: 16 });
    }

    #[test]
    fn clamps_to_bounds() {
        let b = crop_box(&pts(&[(0.0, 2.0), (4.0, 10.0)]), 0.5, 12, 12).unwrap();
        assert_eq!((b.x0, b.y0), (0, 0));
        assert_eq!((b.x1, b.y1), (10, 12));
    }

    #[test]
    fn json_parsing() {
        let points: Vec<String> = (0..21)
            .map(|i| format!(r#"{{"x": {i}.5, "y": {}, "confidence": 0.9}}"#, i * 2))
            .collect();
        let doc = format!(
            r#"{{"image_width": 64, "image_height": 48, "points": [{}]}}"#,
            points.join(",")
        );
        let set = read_keypoints_json(doc.as_bytes()).unwrap();
        assert_eq!(set.points.len(), 21);
        assert_eq!(set.points[3].x, 3.5);
        assert_eq!(set.points[20].y, 40.0);

        let no_conf = read_keypoints_json(br#"{"image_width":1,"image_height":1,"points":[{"x":0,"y":0}]}"#).unwrap();
        assert_eq!(no_conf.points[0].confidence, None);

        for bad in [
            &br#"{"image_width": 4, "image_height": 4, "points": []}"#[..],
            br#"{"image_width": 4, "points": [{"x": 1, "y": 1}]}"#,
            br#"{"image_width": 4, "image_height": 4, "points": [{"x": 1}]}"#,
            b"{not json",
        ] {
            assert!(matches!(read_keypoints_json(bad), Err(Error::Format(_))));
        }
    }

    #[test]
    fn crop_output_has_target_shape() {
        let img = Tensor::from_vec(&[40, 40, 3], (0..4800).map(|v| (v % 255) as f32).collect()).unwrap();
        let kps = KeypointSet {
            image_width: 40,
            image_height: 40,
            points: pts(&[(10.0, 12.0), (25.0, 18.0), (17.0, 30.0)]),
        };
        let out = crop_from_keypoints(&img, &kps, DEFAULT_MARGIN, 32, 32, ResizeMethod::Nearest).unwrap();
        assert_eq!(out.dims(), &[32, 32, 3]);
    }
}
