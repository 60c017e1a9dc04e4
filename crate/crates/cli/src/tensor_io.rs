//! Grid tensor files: magic `BQT1`, a little-endian u32 rank, one u32
//! per axis length, then the values as little-endian f64 in row-major
//! order. Used for coefficient tensors, sign tensors, and user-made
//! sample grids.

use std::path::Path;

use bernquant_core::tensor::NdTensor;

use crate::config::CliError;

const MAGIC: &[u8; 4] = b"BQT1";

/// Ranks past this are unrepresentable in the rest of the pipeline,
/// so the reader refuses them instead of allocating absurd shapes.
const MAX_RANK: u32 = 8;

pub fn write_tensor(path: &Path, t: &NdTensor) -> Result<(), CliError> {
    let mut bytes = Vec::with_capacity(8 + 4 * t.ndim() + 8 * t.data().len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
    for &len in t.shape() {
        bytes.extend_from_slice(&(len as u32).to_le_bytes());
    }
    for &v in t.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)
        .map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))
}

pub fn read_tensor(path: &Path) -> Result<NdTensor, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    let bad = |why: &str| {
        CliError::validation(format!("tensor file {}: {why}", path.display()))
    };
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("not a BQT1 tensor file"));
    }
    let rank = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if rank == 0 || rank > MAX_RANK {
        return Err(bad(&format!("rank {rank} outside 1..={MAX_RANK}")));
    }
    let rank = rank as usize;
    if bytes.len() < 8 + 4 * rank {
        return Err(bad("truncated shape header"));
    }
    let mut shape = Vec::with_capacity(rank);
    for a in 0..rank {
        let off = 8 + 4 * a;
        let len = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        if len == 0 {
            return Err(bad(&format!("axis {a} has length 0")));
        }
        shape.push(len);
    }
    let count: usize = shape.iter().product();
    let body = &bytes[8 + 4 * rank..];
    if body.len() != 8 * count {
        return Err(bad(&format!(
            "shape {shape:?} needs {count} values but the file holds {}",
            body.len() / 8
        )));
    }
    let data: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(bad("values must be finite"));
    }
    NdTensor::from_parts(shape, data).map_err(CliError::from)
}

/// Checks that a tensor is the cube grid of some degree: every axis of
/// length n + 1. Returns (n, d).
pub fn cube_degree(t: &NdTensor, what: &str) -> Result<(usize, usize), CliError> {
    let shape = t.shape();
    let first = shape[0];
    if shape.iter().any(|&s| s != first) {
        return Err(CliError::validation(format!(
            "{what} must be a cube grid with (n+1)^d entries, got shape {shape:?}"
        )));
    }
    Ok((first - 1, shape.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("bq_tensor_io");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let t = NdTensor::from_fn(&[3, 5], |idx| {
            (idx[0] as f64 + 0.1) / (idx[1] as f64 + 0.7)
        });
        let path = tmp("rt.bqt");
        write_tensor(&path, &t).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.shape(), t.shape());
        let same = back
            .data()
            .iter()
            .zip(t.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn malformed_files_are_refused() {
        let path = tmp("bad.bqt");
        std::fs::write(&path, b"QNX1aaaaaaaa").unwrap();
        assert!(read_tensor(&path).is_err());
        // Header promises more data than the body carries.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"BQT1");
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        let err = read_tensor(&path).unwrap_err();
        assert!(err.to_string().contains("9 values"), "{err}");
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn cube_check_reports_ragged_shapes() {
        let t = NdTensor::zeros(&[4, 5]);
        assert!(cube_degree(&t, "sample tensor").is_err());
        let t = NdTensor::zeros(&[5, 5]);
        assert_eq!(cube_degree(&t, "sample tensor").unwrap(), (4, 2));
    }
}
