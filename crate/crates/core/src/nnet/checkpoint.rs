//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic  b"LKQN"
//! 4       4     format version (u32)
//! 8       4     header length H in bytes (u32)
//! 12      H     header: UTF-8 JSON {"layer_sizes": [...], "meta": {...}}
//! 12+H    8·n   parameters as f64; per layer: weights row-major (out × in), then bias
//! end-8   8     FNV-1a 64 checksum of every preceding byte (u64)
//! ```
//!
//! `n` is fixed by `layer_sizes`, so any truncation or extension is detected
//! before the checksum is even read.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Dense, NetworkParams, NetworkSpec};
use crate::error::{CheckpointError, Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"LKQN";

/// Training provenance stored beside the weights.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Policy label, e.g. `level-2` or `dynamic`.
    pub policy: String,
    /// Episodes completed when the snapshot was taken.
    pub episode: u64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    layer_sizes: Vec<usize>,
    meta: CheckpointMeta,
}

fn checksum(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn write_params(params: &NetworkParams, meta: &CheckpointMeta) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        layer_sizes: params.spec().layer_sizes.clone(),
        meta: meta.clone(),
    })
    .expect("header serializes");
    let mut out = Vec::with_capacity(20 + header.len() + 8 * params.spec().n_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for layer in params.layers() {
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

fn corrupt(msg: impl Into<String>) -> Error {
    CheckpointError::Corrupt(msg.into()).into()
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = at
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt(format!("truncated at byte {}", *at)))?;
    let slice = &bytes[*at..end];
    *at = end;
    Ok(slice)
}

fn read_u32(bytes: &[u8], at: &mut usize) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, at, 4)?.try_into().unwrap()))
}

/// Decodes a checkpoint. When `expected` is given the stored layer sizes
/// must match it exactly.
pub fn read_params(
    bytes: &[u8],
    expected: Option<&NetworkSpec>,
) -> Result<(NetworkParams, CheckpointMeta)> {
    let mut at = 0;
    if take(bytes, &mut at, 4)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = read_u32(bytes, &mut at)?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        }
        .into());
    }
    let header_len = read_u32(bytes, &mut at)? as usize;
    let header: Header = serde_json::from_slice(take(bytes, &mut at, header_len)?)
        .map_err(|e| corrupt(format!("header: {e}")))?;
    let spec = NetworkSpec::new(header.layer_sizes).map_err(|e| corrupt(e.to_string()))?;
    if let Some(expected) = expected {
        if expected != &spec {
            return Err(CheckpointError::ShapeMismatch {
                expected: expected.layer_sizes.clone(),
                found: spec.layer_sizes,
            }
            .into());
        }
    }
    let payload_len = spec
        .n_params()
        .checked_mul(8)
        .ok_or_else(|| corrupt("parameter count overflows"))?;
    let payload = take(bytes, &mut at, payload_len)?;
    let body_end = at;
    let stored = u64::from_le_bytes(take(bytes, &mut at, 8)?.try_into().unwrap());
    if at != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - at)));
    }
    if checksum(&bytes[..body_end]) != stored {
        return Err(corrupt("checksum mismatch"));
    }

    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut layers = Vec::with_capacity(spec.layer_sizes.len() - 1);
    for w in spec.layer_sizes.windows(2) {
        let (n_in, n_out) = (w[0], w[1]);
        let weights: Vec<f64> = values.by_ref().take(n_in * n_out).collect();
        let bias: Vec<f64> = values.by_ref().take(n_out).collect();
        layers.push(Dense {
            weights: Array2::from_shape_vec((n_out, n_in), weights).expect("length checked"),
            bias: Array1::from_vec(bias),
        });
    }
    let params = NetworkParams::from_layers(spec, layers)?;
    if !params.is_finite() {
        return Err(corrupt("non-finite parameter"));
    }
    Ok((params, header.meta))
}

pub fn save_params(params: &NetworkParams, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let bytes = write_params(params, meta);
    let tmp = path.with_extension("partial");
    let mut file = fs::File::create(&tmp)?;
    file.write_all(&bytes)?;
    file.sync_all()?;
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn load_params(
    path: &Path,
    expected: Option<&NetworkSpec>,
) -> Result<(NetworkParams, CheckpointMeta)> {
    read_params(&fs::read(path)?, expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn sample() -> (NetworkParams, CheckpointMeta) {
        let spec = NetworkSpec::with_hidden(&[16, 8], 5);
        let params = NetworkParams::xavier_init(&spec, &mut substream(11, "ckpt", 0));
        let meta = CheckpointMeta {
            policy: "level-1".into(),
            episode: 5900,
            seed: 11,
        };
        (params, meta)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (params, meta) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l1.ckpt");
        save_params(&params, &meta, &path).unwrap();
        let (loaded, loaded_meta) = load_params(&path, Some(params.spec())).unwrap();
        assert_eq!(loaded_meta, meta);
        for (a, b) in params.layers().iter().zip(loaded.layers()) {
            for (x, y) in a.weights.iter().zip(b.weights.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        let mut rng = substream(11, "inputs", 0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(params.forward(&x).unwrap(), loaded.forward(&x).unwrap());
        }
    }

    #[test]
    fn wrong_output_width_is_a_shape_mismatch() {
        let (params, meta) = sample();
        let bytes = write_params(&params, &meta);
        let dynamic_slot = NetworkSpec::with_hidden(&[16, 8], 3);
        let err = read_params(&bytes, Some(&dynamic_slot)).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(CheckpointError::ShapeMismatch { .. })));
    }

    #[test]
    fn truncation_and_bit_flips_are_corrupt() {
        let (params, meta) = sample();
        let bytes = write_params(&params, &meta);
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            let err = read_params(&bytes[..cut], None).unwrap_err();
            assert!(matches!(err, Error::Checkpoint(CheckpointError::Corrupt(_))), "cut {cut}");
        }
        let mut flipped = bytes.clone();
        let i = bytes.len() - 40;
        flipped[i] ^= 0x10;
        assert!(matches!(
            read_params(&flipped, None).unwrap_err(),
            Error::Checkpoint(CheckpointError::Corrupt(_))
        ));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let (params, meta) = sample();
        let mut bytes = write_params(&params, &meta);
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            read_params(&bytes, None).unwrap_err(),
            Error::Checkpoint(CheckpointError::VersionMismatch { found: 2, expected: 1 })
        ));
    }
}
