//! Binary weight file (`.mcw`).
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic        8 bytes  "MCNWGT01"
//! entry count  u32
//! entry*       name length u32, UTF-8 name, rank u32, rank x u32 extents,
//!              product(extents) x f32 payload in row-major order
//! ```

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use super::Model;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const WEIGHT_MAGIC: &[u8; 8] = b"MCNWGT01";

const MAX_NAME_LEN: u32 = 4096;
const MAX_RANK: u32 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightEntry {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightFile {
    pub entries: Vec<WeightEntry>,
}

/// Outcome of a non-strict load.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadReport {
    pub loaded: Vec<String>,
    /// Model parameters left untouched: missing from the file or stored with
    /// a different shape.
    pub skipped: Vec<String>,
    /// File entries that matched no model parameter.
    pub unused: Vec<String>,
}

impl LoadReport {
    /// Layer names whose parameters were all skipped.
    pub fn skipped_layers(&self) -> Vec<String> {
        let mut layers: Vec<String> = self
            .skipped
            .iter()
            .filter_map(|p| p.split_once('/').map(|(l, _)| l.to_string()))
            .collect();
        layers.dedup();
        layers
    }
}

impl WeightFile {
    pub fn from_model(model: &Model) -> Self {
        WeightFile {
            entries: model
                .parameters()
                .map(|(name, t, _)| WeightEntry {
                    name,
                    tensor: t.clone(),
                })
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|e| e.name == name).map(|e| &e.tensor)
    }

    /// Exact size in bytes of the encoded file.
    pub fn encoded_len(&self) -> usize {
        12 + self
            .entries
            .iter()
            .map(|e| 4 + e.name.len() + 4 + 4 * e.tensor.rank() + 4 * e.tensor.len())
            .sum::<usize>()
    }

    pub fn write_to<W: Write>(&self, mut sink: W) -> Result<()> {
        sink.write_all(WEIGHT_MAGIC)?;
        sink.write_all(&len_u32(self.entries.len())?.to_le_bytes())?;
        for e in &self.entries {
            sink.write_all(&len_u32(e.name.len())?.to_le_bytes())?;
            sink.write_all(e.name.as_bytes())?;
            sink.write_all(&len_u32(e.tensor.rank())?.to_le_bytes())?;
            for &d in e.tensor.dims() {
                sink.write_all(&len_u32(d)?.to_le_bytes())?;
            }
            let mut payload = Vec::with_capacity(4 * e.tensor.len());
            for v in e.tensor.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            sink.write_all(&payload)?;
        }
        sink.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut source: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut source, &mut magic, "magic")?;
        if &magic != WEIGHT_MAGIC {
            return Err(Error::format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&magic),
                "MCNWGT01"
            )));
        }
        let count = read_u32(&mut source, "entry count")?;
        let mut entries = Vec::new();
        let mut names = HashSet::new();
        for i in 0..count {
            let name_len = read_u32(&mut source, "name length")?;
            if name_len > MAX_NAME_LEN {
                return Err(Error::format(format!("entry {i}: name length {name_len} is too large")));
            }
            let mut name = vec![0u8; name_len as usize];
            read_exact(&mut source, &mut name, "name")?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::format(format!("entry {i}: name is not UTF-8")))?;
            if !names.insert(name.clone()) {
                return Err(Error::format(format!("duplicate entry `{name}`")));
            }
            let rank = read_u32(&mut source, "rank")?;
            if rank == 0 || rank > MAX_RANK {
                return Err(Error::format(format!("entry `{name}`: unsupported rank {rank}")));
            }
            let dims = (0..rank)
                .map(|_| read_u32(&mut source, "extent").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(4).map(|_| n))
                .ok_or_else(|| Error::format(format!("entry `{name}`: extents {dims:?} overflow")))?;
            // read through `take` so a corrupt count cannot force a huge allocation up front
            let mut payload = Vec::new();
            (&mut source).take(4 * numel as u64).read_to_end(&mut payload)?;
            if payload.len() != 4 * numel {
                return Err(Error::format(format!("entry `{name}`: truncated payload")));
            }
            let data = payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            let tensor = Tensor::from_vec(&dims, data)
                .map_err(|e| Error::format(format!("entry `{name}`: {e}")))?;
            entries.push(WeightEntry { name, tensor });
        }
        Ok(WeightFile { entries })
    }

    pub fn read_path(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn len_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::format(format!("{v} does not fit in a u32 field")))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(format!("file truncated in {what}")),
        _ => Error::Stream(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

impl Model {
    pub fn save_weights<W: Write>(&self, sink: W) -> Result<()> {
        WeightFile::from_model(self).write_to(sink)
    }

    pub fn save_weights_path(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.save_weights(std::io::BufWriter::new(file))
    }

    pub fn load_weights<R: Read>(&mut self, source: R, strict: bool) -> Result<LoadReport> {
        let file = WeightFile::read_from(source)?;
        self.apply_weights(&file, strict)
    }

    /// Copy parameters from `file` into the model.
    ///
    /// Strict mode requires the file to hold exactly the model's parameter
    /// names with identical shapes and fails without modifying the model
    /// otherwise. Non-strict mode copies every entry whose name and shape
    /// match and reports the rest.
    pub fn apply_weights(&mut self, file: &WeightFile, strict: bool) -> Result<LoadReport> {
        let by_name: HashMap<&str, &Tensor> =
            file.entries.iter().map(|e| (e.name.as_str(), &e.tensor)).collect();
        let mut report = LoadReport::default();
        let mut plan = Vec::new();
        let mut wanted = HashSet::new();
        for (name, t, _) in self.parameters() {
            wanted.insert(name.clone());
            match by_name.get(name.as_str()) {
                Some(src) if src.dims() == t.dims() => plan.push(name),
                Some(src) => {
                    if strict {
                        return Err(Error::shape(format!(
                            "`{name}` is {} in the file but {} in the model",
                            src.shape(),
                            t.shape()
                        )));
                    }
                    report.skipped.push(name);
                }
                None => {
                    if strict {
                        return Err(Error::format(format!("weight file has no `{name}` entry")));
                    }
                    report.skipped.push(name);
                }
            }
        }
        report.unused = file
            .entries
            .iter()
            .filter(|e| !wanted.contains(&e.name))
            .map(|e| e.name.clone())
            .collect();
        if strict && !report.unused.is_empty() {
            return Err(Error::format(format!(
                "weight file has entries the model lacks: {:?}",
                report.unused
            )));
        }
        for layer in self.layers_mut() {
            let name = layer.name.clone();
            if let Some((w, b)) = layer.kind.params_mut() {
                for (suffix, dst) in [("kernel", w), ("bias", b)] {
                    let full = format!("{name}/{suffix}");
                    if plan.contains(&full) {
                        *dst = by_name[full.as_str()].clone();
                    }
                }
            }
        }
        report.loaded = plan;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_vgg_mini;

    #[test]
    fn round_trip_is_bit_exact_and_size_matches() {
        let m = build_vgg_mini([16, 16, 3], 5, 3).unwrap();
        let mut buf = Vec::new();
        m.save_weights(&mut buf).unwrap();
        assert_eq!(buf.len(), WeightFile::from_model(&m).encoded_len());
        let mut other = build_vgg_mini([16, 16, 3], 5, 99).unwrap();
        let report = other.load_weights(&buf[..], true).unwrap();
        assert!(report.skipped.is_empty());
        for ((_, a, _), (_, b, _)) in m.parameters().zip(other.parameters()) {
            let a: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn bad_magic_and_truncation() {
        let err = WeightFile::read_from(&b"MCNWGT02\0\0\0\0"[..]).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        let m = build_vgg_mini([8, 8, 1], 2, 0).unwrap();
        let mut buf = Vec::new();
        m.save_weights(&mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(matches!(WeightFile::read_from(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn strict_shape_mismatch_is_shape_error() {
        let m = build_vgg_mini([16, 16, 3], 10, 0).unwrap();
        let mut buf = Vec::new();
        m.save_weights(&mut buf).unwrap();
        let mut small = build_vgg_mini([16, 16, 3], 4, 0).unwrap();
        let before = small.clone();
        assert!(matches!(small.load_weights(&buf[..], true), Err(Error::Shape(_))));
        assert_eq!(small, before);
    }

    #[test]
    fn head_surgery_with_non_strict_load() {
        let big = build_vgg_mini([16, 16, 3], 1000, 1).unwrap();
        let mut buf = Vec::new();
        big.save_weights(&mut buf).unwrap();
        let mut small = build_vgg_mini([16, 16, 3], 10, 2).unwrap();
        let head_before = small.layer("predictions").unwrap().clone();
        let report = small.load_weights(&buf[..], false).unwrap();
        assert_eq!(report.skipped, vec!["predictions/kernel", "predictions/bias"]);
        assert_eq!(report.skipped_layers(), vec!["predictions"]);
        assert_eq!(small.layer("predictions").unwrap(), &head_before);
        assert_eq!(small.layer("fc1").unwrap().kind, big.layer("fc1").unwrap().kind);
        assert_eq!(
            small.layer("block2_conv1").unwrap().kind,
            big.layer("block2_conv1").unwrap().kind
        );
    }
}
