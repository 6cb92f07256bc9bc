//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes   b"RRNCKPT1"
//! header_len u64 LE    length of the JSON header in bytes
//! header     UTF-8 JSON {widths, step, seed, config_digest, extra}
//! payload    for each layer in order: weights (row-major, fan_in x fan_out)
//!            then bias, every value an f64 little-endian
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RrnError};
use crate::network::{Layer, LayerSpec, NetworkParams};

pub const MAGIC: &[u8; 8] = b"RRNCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub widths: Vec<usize>,
    pub step: u64,
    pub seed: u64,
    pub config_digest: String,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

pub fn encode_checkpoint(params: &NetworkParams, step: u64, seed: u64, config_digest: &str, extra: BTreeMap<String, String>) -> Vec<u8> {
    let meta = CheckpointMeta {
        widths: params.spec().widths().to_vec(),
        step,
        seed,
        config_digest: config_digest.to_string(),
        extra,
    };
    let header = serde_json::to_vec(&meta).expect("metadata serializes");
    let mut out = Vec::with_capacity(16 + header.len() + params.n_params() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for layer in &params.layers {
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &NetworkParams,
    step: u64,
    seed: u64,
    config_digest: &str,
    extra: BTreeMap<String, String>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params, step, seed, config_digest, extra)).map_err(|e| RrnError::io(path, e))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(NetworkParams, CheckpointMeta)> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(RrnError::CorruptHeader("missing checkpoint magic".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header = bytes
        .get(16..16usize.saturating_add(header_len))
        .ok_or_else(|| RrnError::CorruptHeader("header length exceeds file".into()))?;
    let meta: CheckpointMeta =
        serde_json::from_slice(header).map_err(|e| RrnError::CorruptHeader(format!("metadata: {e}")))?;
    let spec = LayerSpec::new(meta.widths.clone()).map_err(|e| RrnError::CorruptHeader(e.to_string()))?;

    let payload = &bytes[16 + header_len..];
    let n_values: usize = spec.widths().windows(2).map(|p| p[0] * p[1] + p[1]).sum();
    let expected = (n_values * 8) as u64;
    if payload.len() as u64 != expected {
        return Err(RrnError::PayloadLength {
            expected,
            found: payload.len() as u64,
        });
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let layers = spec
        .widths()
        .windows(2)
        .map(|p| {
            let weights = Array2::from_shape_simple_fn((p[0], p[1]), || values.next().expect("sized"));
            let bias = Array1::from_shape_simple_fn(p[1], || values.next().expect("sized"));
            Layer { weights, bias }
        })
        .collect();
    Ok((NetworkParams::from_layers(spec, layers)?, meta))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(NetworkParams, u64, CheckpointMeta)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| RrnError::io(path, e))?;
    let (params, meta) = decode_checkpoint(&bytes)?;
    Ok((params, meta.step, meta))
}

/// Load and require the stored widths to match `expected`.
pub fn load_checkpoint_for(path: impl AsRef<Path>, expected: &LayerSpec) -> Result<(NetworkParams, u64, CheckpointMeta)> {
    let loaded = load_checkpoint(path)?;
    check_compatible(loaded.0.spec(), expected)?;
    Ok(loaded)
}

/// Shape error naming the first layer whose weight matrix differs.
pub fn check_compatible(found: &LayerSpec, expected: &LayerSpec) -> Result<()> {
    let names = expected.layer_names();
    let fw = found.widths();
    let ew = expected.widths();
    for i in 0..ew.len().max(fw.len()).saturating_sub(1) {
        let f = fw.get(i).zip(fw.get(i + 1));
        let e = ew.get(i).zip(ew.get(i + 1));
        if f != e {
            let name = names.get(i + 1).cloned().unwrap_or_else(|| format!("layer {}", i + 1));
            return Err(RrnError::Shape(format!(
                "layer {} ({name}): checkpoint has {:?}, expected {:?}",
                i + 1,
                f,
                e
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_params;

    fn spec_a() -> LayerSpec {
        LayerSpec::new(vec![64, 40, 32, 40, 64]).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let params = init_params(&spec_a(), 9);
        let mut extra = BTreeMap::new();
        extra.insert("note".to_string(), "x".to_string());
        save_checkpoint(&path, &params, 1234, 9, "abc", extra.clone()).unwrap();
        let (loaded, step, meta) = load_checkpoint(&path).unwrap();
        assert_eq!(step, 1234);
        assert_eq!(meta.extra, extra);
        for (a, b) in params.layers.iter().zip(&loaded.layers) {
            assert!(a.weights.iter().zip(b.weights.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert!(a.bias.iter().zip(b.bias.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn truncated_file_reports_payload_length() {
        let mut bytes = encode_checkpoint(&init_params(&spec_a(), 1), 0, 1, "", BTreeMap::new());
        bytes.truncate(bytes.len() - 5);
        assert!(matches!(decode_checkpoint(&bytes), Err(RrnError::PayloadLength { .. })));
    }

    #[test]
    fn bad_magic_and_bad_json_are_header_errors() {
        let mut bytes = encode_checkpoint(&init_params(&spec_a(), 1), 0, 1, "", BTreeMap::new());
        bytes[20] = b'#';
        assert!(matches!(decode_checkpoint(&bytes), Err(RrnError::CorruptHeader(_))));
        bytes[0] = b'X';
        assert!(matches!(decode_checkpoint(&bytes), Err(RrnError::CorruptHeader(_))));
    }

    #[test]
    fn mismatched_spec_names_first_layer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        save_checkpoint(&path, &init_params(&spec_a(), 2), 0, 2, "", BTreeMap::new()).unwrap();
        let spec_b = LayerSpec::new(vec![64, 48, 32, 48, 64]).unwrap();
        match load_checkpoint_for(&path, &spec_b) {
            Err(RrnError::Shape(msg)) => assert!(msg.contains("layer 1 (V1)"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
