//! Datasets, image decoding and preprocessing, and keypoint cropping.
//!
//! A dataset on disk is a root directory with one subdirectory per class;
//! class indices follow the ascending order of the directory names, so
//! `a`..`j` map to 0..9.

mod image;
mod keypoints;
mod ppm;

pub use image::{convert_channels, crop, normalize, resize, ResizeMethod};
pub use keypoints::{crop_box, crop_from_keypoints, read_keypoints_json, CropBox, Keypoint, KeypointSet, DEFAULT_MARGIN};
pub use ppm::{decode_ppm, encode_ppm};

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[h, w, c]` with values in `[0, 1]`.
    pub image: Tensor,
    pub label: usize,
    pub source_path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, class_names: Vec<String>) -> Result<Self> {
        if class_names.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Dataset("class names must be strictly ascending".into()));
        }
        if let Some(s) = samples.iter().find(|s| s.label >= class_names.len()) {
            return Err(Error::Dataset(format!(
                "sample {} has label {} but there are {} classes",
                s.source_path,
                s.label,
                class_names.len()
            )));
        }
        Ok(Dataset {
            samples,
            class_names,
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Samples at `indices`, in that order, with the same class names.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            class_names: self.class_names.clone(),
        }
    }
}

/// Target geometry for loaded images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    pub dims: [usize; 3],
    pub resize: ResizeMethod,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeFailure {
    pub path: PathBuf,
    pub reason: String,
}

/// Files that could not be turned into samples.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecodeReport {
    pub failures: Vec<DecodeFailure>,
}

impl DecodeReport {
    /// One `<path>\t<reason>` line per failure.
    pub fn to_text(&self) -> String {
        self.failures
            .iter()
            .map(|f| format!("{}\t{}\n", f.path.display(), f.reason.replace(['\t', '\n'], " ")))
            .collect()
    }
}

/// Decode, normalize and resize one image file to `options.dims`.
pub fn load_image(path: &Path, options: &LoadOptions) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let raw = match ext.as_deref() {
        Some("ppm") => decode_ppm(&bytes)?,
        other => {
            return Err(Error::format(format!(
                "unsupported image type {:?}",
                other.unwrap_or("")
            )))
        }
    };
    preprocess(&raw, options)
}

/// 0-255 image to a normalized tensor of the configured shape.
pub fn preprocess(raw: &Tensor, options: &LoadOptions) -> Result<Tensor> {
    let [h, w, c] = options.dims;
    let img = convert_channels(&normalize(raw), c)?;
    resize(&img, h, w, options.resize)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| !n.starts_with('.'))
        })
        .collect::<Vec<_>>();
    entries.sort();
    Ok(entries)
}

/// Load `<root>/<class>/<image>` into memory. Undecodable files are listed
/// in the returned report and skipped.
pub fn load_dataset(root: &Path, options: &LoadOptions) -> Result<(Dataset, DecodeReport)> {
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(Error::Dataset(format!(
            "{} has no class subdirectories",
            root.display()
        )));
    }
    let class_names: Vec<String> = class_dirs
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let mut files = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        for path in sorted_entries(dir)? {
            if path.is_file() {
                files.push((label, path));
            }
        }
    }
    let decoded: Vec<_> = files
        .par_iter()
        .map(|(label, path)| (*label, path, load_image(path, options)))
        .collect();
    let mut samples = Vec::new();
    let mut report = DecodeReport::default();
    for (label, path, result) in decoded {
        match result {
            Ok(image) => samples.push(Sample {
                image,
                label,
                source_path: path.display().to_string(),
            }),
            Err(e) => report.failures.push(DecodeFailure {
                path: path.clone(),
                reason: e.to_string(),
            }),
        }
    }
    Ok((Dataset::new(samples, class_names)?, report))
}
