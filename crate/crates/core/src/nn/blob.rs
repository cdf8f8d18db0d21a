use std::fs;
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 4] = b"F64B";

#[derive(Debug, thiserror::Error)]
pub enum BlobError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Writes `values` as a little-endian blob: magic, `u64` count, payload.
pub fn write_f64_blob(path: &Path, values: &[f64]) -> Result<(), BlobError> {
    let mut bytes = Vec::with_capacity(12 + values.len() * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|source| BlobError::Io { path: path.to_path_buf(), source })
}

pub fn read_f64_blob(path: &Path) -> Result<Vec<f64>, BlobError> {
    let bytes = fs::read(path).map_err(|source| BlobError::Io { path: path.to_path_buf(), source })?;
    let bad = |message: &str| BlobError::Format { path: path.to_path_buf(), message: message.into() };
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("not a parameter blob"));
    }
    let count = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
    let payload = &bytes[12..];
    if payload.len() != count * 8 {
        return Err(bad("truncated or oversized payload"));
    }
    Ok(payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.bin");
        let v = vec![0.1, -3.5e-300, f64::MAX, 0.0, -0.0];
        write_f64_blob(&p, &v).unwrap();
        let back = read_f64_blob(&p).unwrap();
        assert_eq!(v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), back.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        fs::write(&p, b"F64B\x02\0\0\0\0\0\0\0abc").unwrap();
        assert!(matches!(read_f64_blob(&p), Err(BlobError::Format { .. })));
    }
}
