//! Checkpoint serialization.
//!
//! Layout: one JSON header line `{"format_version", "v", "h",
//! "vocab_hash", "checksum"}` terminated by `\n`, followed by raw
//! little-endian IEEE-754 doubles. Block order: policy context encoder,
//! policy token embedding, policy output, policy biases, the same four
//! blocks for the frozen reference, then value weights and value bias.
//! The checksum is FNV-1a 64 over the payload bytes, so truncation and
//! corruption both surface as a checksum mismatch.

use super::{fnv1a64, ModelError, PolicyParameters, PolicyState, ValueParameters};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub v: usize,
    pub h: usize,
    /// Hex FNV-1a 64 of the vocabulary token list; callers compare it
    /// against the vocabulary they plan to use.
    pub vocab_hash: String,
    /// Hex FNV-1a 64 of the payload bytes.
    pub checksum: String,
}

fn blocks_of(state: &PolicyState) -> Vec<&[f64]> {
    let mut blocks: Vec<&[f64]> = Vec::with_capacity(9);
    blocks.extend(state.policy.blocks());
    blocks.extend(state.reference.blocks());
    blocks.push(&state.value.weights);
    blocks
}

/// Writes `state` to `path`. `vocab_hash` is the value of
/// [`super::Vocabulary::hash`] for the vocabulary the model was built
/// against.
pub fn save_checkpoint(
    path: &Path,
    state: &PolicyState,
    vocab_hash: u64,
) -> Result<(), ModelError> {
    let mut payload = Vec::new();
    for block in blocks_of(state) {
        for &x in block {
            payload.extend_from_slice(&x.to_le_bytes());
        }
    }
    payload.extend_from_slice(&state.value.bias.to_le_bytes());

    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        v: state.policy.v,
        h: state.policy.h,
        vocab_hash: format!("{vocab_hash:016x}"),
        checksum: format!("{:016x}", fnv1a64(&payload)),
    };
    let mut bytes = serde_json::to_vec(&header).expect("header serializes");
    bytes.push(b'\n');
    bytes.extend_from_slice(&payload);
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Reads a checkpoint back. The header is returned so callers can verify
/// the recorded vocabulary hash.
pub fn load_checkpoint(path: &Path) -> Result<(PolicyState, CheckpointHeader), ModelError> {
    let bytes = std::fs::read(path)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| ModelError::MalformedHeader("missing header line".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| ModelError::MalformedHeader(e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(ModelError::VersionMismatch {
            found: header.format_version,
            expected: FORMAT_VERSION,
        });
    }

    let payload = &bytes[newline + 1..];
    let (v, h) = (header.v, header.h);
    let expected_doubles = 2 * (4 * v * h + v) + v + 1;
    if payload.len() != expected_doubles * 8
        || format!("{:016x}", fnv1a64(payload)) != header.checksum
    {
        return Err(ModelError::ChecksumMismatch);
    }

    let mut doubles = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut take = |n: usize| -> Vec<f64> { doubles.by_ref().take(n).collect() };
    let (policy, reference) = {
        let mut read_params = || PolicyParameters {
            v,
            h,
            context_encoder: take(v * h),
            token_embedding: take(v * h),
            output: take(2 * h * v),
            biases: take(v),
        };
        let policy = read_params();
        let reference = read_params();
        (policy, reference)
    };
    let value = ValueParameters { weights: take(v), bias: take(1)[0] };
    Ok((PolicyState { policy, reference, value }, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn sample_state(v: usize, h: usize, seed: u64) -> PolicyState {
        let mut rng = substream(seed, &[95]);
        let mut state = PolicyState::new(PolicyParameters::init_random(v, h, &mut rng));
        for w in state.value.weights.iter_mut() {
            *w = rng.gen_range(-1.0..1.0);
        }
        state.value.bias = rng.gen_range(-1.0..1.0);
        // Drift the live policy away from the reference so the blocks
        // are distinguishable in the file.
        state.policy.biases[0] += 0.25;
        state
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let state = sample_state(12, 3, 7);
        save_checkpoint(&path, &state, 0xabcd).unwrap();
        let (loaded, header) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, state);
        assert_eq!(header.vocab_hash, format!("{:016x}", 0xabcd));
        assert_eq!(header.v, 12);
        assert_eq!(header.h, 3);
    }

    #[test]
    fn truncated_file_reports_checksum_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &sample_state(8, 2, 8), 1).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 16);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(ModelError::ChecksumMismatch)));
    }

    #[test]
    fn corrupted_payload_reports_checksum_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &sample_state(8, 2, 9), 1).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(ModelError::ChecksumMismatch)));
    }

    #[test]
    fn future_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &sample_state(8, 2, 10), 1).unwrap();
        let text = std::fs::read(&path).unwrap();
        let newline = text.iter().position(|&b| b == b'\n').unwrap();
        let mut header: CheckpointHeader = serde_json::from_slice(&text[..newline]).unwrap();
        header.format_version = FORMAT_VERSION + 1;
        let mut bytes = serde_json::to_vec(&header).unwrap();
        bytes.push(b'\n');
        bytes.extend_from_slice(&text[newline + 1..]);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(ModelError::VersionMismatch { found, expected })
                if found == FORMAT_VERSION + 1 && expected == FORMAT_VERSION
        ));
    }
}
