//! Checkpoint format:
//!
//! ```text
//! "DLAB" | version: u16 | n_dims: u32 | dims: n_dims × u32
//! per layer: weights (out × in, row-major f64) then bias (out × f64)
//! ```
//! All integers and floats little-endian. Hidden layers are ReLU and the
//! final layer is linear, so activations are not stored.

use std::path::Path;

use super::{Activation, DenseLayer, NetworkParams};
use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::{LabError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"DLAB";
const VERSION: u16 = 1;

pub fn write_checkpoint<S: Scalar>(net: &NetworkParams<S>) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u16(VERSION);
    let dims = net.dims();
    w.u32(dims.len() as u32);
    for d in dims {
        w.u32(d as u32);
    }
    for layer in net.layers() {
        for &v in layer.weights.as_slice().iter().chain(&layer.bias) {
            w.f64(v.as_f64());
        }
    }
    w.finish()
}

pub fn read_checkpoint<S: Scalar>(bytes: &[u8]) -> Result<NetworkParams<S>> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(r.error(format!("unsupported checkpoint version {version}")));
    }
    let n_dims = r.u32("dimension count")? as usize;
    if n_dims < 2 {
        return Err(r.error(format!("checkpoint lists {n_dims} dimensions, need at least 2")));
    }
    r.require(4 * n_dims as u64, "dimension list")?;
    let dims = (0..n_dims)
        .map(|_| r.u32("dimension").map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    if dims.contains(&0) {
        return Err(LabError::InvalidArchitecture(format!(
            "checkpoint dims {dims:?} contain zero"
        )));
    }
    let n_layers = dims.len() - 1;
    let mut layers = Vec::with_capacity(n_layers);
    for (i, w) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = r.f64_vec(fan_in * fan_out, "weights")?;
        let bias = r.f64_vec(fan_out, "bias")?;
        let activation = if i + 1 == n_layers {
            Activation::Identity
        } else {
            Activation::Relu
        };
        layers.push(DenseLayer::new(
            Matrix::from_vec(fan_out, fan_in, weights.into_iter().map(S::lit).collect())?,
            bias.into_iter().map(S::lit).collect(),
            activation,
        )?);
    }
    r.finish()?;
    NetworkParams::from_layers(layers)
}

pub fn save_checkpoint<S: Scalar>(net: &NetworkParams<S>, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &write_checkpoint(net))
}

pub fn load_checkpoint<S: Scalar>(path: impl AsRef<Path>) -> Result<NetworkParams<S>> {
    read_checkpoint(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_network;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut net: NetworkParams<f64> = init_network(&[5, 9, 4, 3], 42).unwrap();
        net.layers_mut()[2].bias[1] = -0.1234567890123;
        let bytes = write_checkpoint(&net);
        assert_eq!(&bytes[..4], b"DLAB");
        let back: NetworkParams<f64> = read_checkpoint(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(write_checkpoint(&back), bytes);
    }

    #[test]
    fn size_matches_layout() {
        let net: NetworkParams<f64> = init_network(&[2, 3, 2], 1).unwrap();
        let params = 2 * 3 + 3 + 3 * 2 + 2;
        assert_eq!(write_checkpoint(&net).len(), 4 + 2 + 4 + 3 * 4 + 8 * params);
    }

    #[test]
    fn truncated_checkpoint_reports_offset() {
        let net: NetworkParams<f64> = init_network(&[2, 3, 2], 1).unwrap();
        let bytes = write_checkpoint(&net);
        let err = read_checkpoint::<f64>(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, LabError::Parse { .. }), "{err}");
        let err = read_checkpoint::<f64>(b"NOPE").unwrap_err();
        assert!(matches!(err, LabError::Parse { offset: 0, .. }));
    }
}
