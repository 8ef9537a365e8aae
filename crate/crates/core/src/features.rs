//! Penultimate feature dumps.
//!
//! ```text
//! "FEAT" | version: u16 | N: u64 | h: u32 | K: u32 | temperature_tag: f64 | split: u8
//! rows: N × h f64, row-major | labels: N × u32
//! ```
//! The header is [`HEADER_LEN`] bytes, so a dump is `31 + 8·N·h + 4·N` bytes.

use std::path::Path;

use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::{LabError, Result};
use crate::geometry::{extract_features, FeatureMatrix, Split};
use crate::matrix::Matrix;
use crate::nn::NetworkParams;
use crate::scalar::Scalar;
use crate::synth::LabeledDataset;

const MAGIC: &[u8; 4] = b"FEAT";
const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 8 + 4 + 4 + 8 + 1;

pub fn write_features<S: Scalar>(features: &FeatureMatrix<S>) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.u64(features.len() as u64);
    w.u32(features.dim() as u32);
    w.u32(features.num_classes as u32);
    w.f64(features.temperature_tag);
    w.u8(features.split.tag());
    for &v in features.rows.as_slice() {
        w.f64(v.as_f64());
    }
    for &l in &features.labels {
        w.u32(l as u32);
    }
    w.finish()
}

pub fn read_features<S: Scalar>(bytes: &[u8]) -> Result<FeatureMatrix<S>> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(r.error(format!("unsupported feature dump version {version}")));
    }
    let n = r.u64("row count")? as usize;
    let h = r.u32("feature dimension")? as usize;
    let k = r.u32("class count")? as usize;
    let temperature = r.f64("temperature tag")?;
    let split_tag = r.u8("split tag")?;
    let split = Split::from_tag(split_tag).ok_or_else(|| r.error(format!("invalid split tag {split_tag}")))?;
    let rows = r.f64_vec(n * h, "feature rows")?;
    r.require(4 * n as u64, "labels")?;
    let labels = (0..n)
        .map(|_| r.u32("label").map(|l| l as usize))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    FeatureMatrix::new(
        Matrix::from_vec(n, h, rows.into_iter().map(S::lit).collect())?,
        labels,
        k,
        split,
        temperature,
    )
    .map_err(|e| match e {
        LabError::Index { index, classes } => {
            LabError::Validation(format!("label {index} out of range for {classes} classes"))
        }
        other => other,
    })
}

/// Extracts penultimate features of `data` under `net` and writes them to `path`.
pub fn dump_features<S: Scalar>(
    net: &NetworkParams<S>,
    data: &LabeledDataset<S>,
    split: Split,
    temperature_tag: f64,
    path: impl AsRef<Path>,
) -> Result<FeatureMatrix<S>> {
    let features = extract_features(net, data, split, temperature_tag)?;
    write_file(path.as_ref(), &write_features(&features))?;
    Ok(features)
}

/// Loads a dump; `expected_dim` rejects dumps of the wrong width.
pub fn load_features<S: Scalar>(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<FeatureMatrix<S>> {
    let features: FeatureMatrix<S> = read_features(&read_file(path.as_ref())?)?;
    if let Some(h) = expected_dim {
        if features.dim() != h {
            return Err(LabError::Validation(format!(
                "{}: feature dimension {} but {h} expected",
                path.as_ref().display(),
                features.dim()
            )));
        }
    }
    Ok(features)
}
