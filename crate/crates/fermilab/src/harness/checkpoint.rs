use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FERMICKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Layout: magic, version (u32 LE), kind length (u16 LE), kind, payload length
/// (u64 LE), JSON payload, SHA-256 of everything before it.
pub fn encode_checkpoint<T: Serialize>(kind: &str, value: &T) -> Result<Vec<u8>> {
    let payload = serde_json::to_vec(value).map_err(|e| Error::Serde(e.to_string()))?;
    let kind_len = u16::try_from(kind.len()).map_err(|_| Error::Serde("checkpoint kind is too long".into()))?;
    let mut out = Vec::with_capacity(payload.len() + kind.len() + 54);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&kind_len.to_le_bytes());
    out.extend_from_slice(kind.as_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = at.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| Error::Serde("truncated checkpoint".into()))?;
    let s = &bytes[*at..end];
    *at = end;
    Ok(s)
}

pub fn decode_checkpoint<T: DeserializeOwned>(bytes: &[u8], kind: &str) -> Result<T> {
    if bytes.len() < 32 {
        return Err(Error::Serde("truncated checkpoint".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Serde("checkpoint checksum mismatch".into()));
    }
    let mut at = 0;
    if take(body, &mut at, 8)? != CHECKPOINT_MAGIC {
        return Err(Error::Serde("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(take(body, &mut at, 4)?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Serde(format!("checkpoint version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let kind_len = u16::from_le_bytes(take(body, &mut at, 2)?.try_into().expect("2 bytes")) as usize;
    let found = std::str::from_utf8(take(body, &mut at, kind_len)?).map_err(|e| Error::Serde(e.to_string()))?;
    if found != kind {
        return Err(Error::Serde(format!("checkpoint holds `{found}`, expected `{kind}`")));
    }
    let len = u64::from_le_bytes(take(body, &mut at, 8)?.try_into().expect("8 bytes")) as usize;
    let payload = take(body, &mut at, len)?;
    if at != body.len() {
        return Err(Error::Serde("trailing bytes in checkpoint".into()));
    }
    serde_json::from_slice(payload).map_err(|e| Error::Serde(e.to_string()))
}

pub fn write_checkpoint<T: Serialize>(path: &Path, kind: &str, value: &T) -> Result<()> {
    let bytes = encode_checkpoint(kind, value)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;
    use crate::states::families::hermite_functions;
    use crate::states::OrbitalSet;

    #[test]
    fn orbital_sets_round_trip() {
        let grid = Grid::line(64, 8.0).unwrap();
        let set = OrbitalSet::slater(grid, hermite_functions(&grid, 2, 1.0, 0.3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        write_checkpoint(&path, "orbitals", &set).unwrap();
        let back: OrbitalSet = read_checkpoint(&path, "orbitals").unwrap();
        assert_eq!(back.orbitals, set.orbitals);
        assert_eq!(back.weights, set.weights);
        assert!(matches!(read_checkpoint::<OrbitalSet>(&path, "kernel"), Err(Error::Serde(_))));
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = encode_checkpoint("v", &vec![1.0f64, 2.0]).unwrap();
        assert_eq!(decode_checkpoint::<Vec<f64>>(&bytes, "v").unwrap(), vec![1.0, 2.0]);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(decode_checkpoint::<Vec<f64>>(&bytes, "v").is_err());
        assert!(decode_checkpoint::<Vec<f64>>(&bytes[..10], "v").is_err());
        assert!(matches!(read_checkpoint::<Vec<f64>>(Path::new("/nonexistent/x.ckpt"), "v"), Err(Error::Io { .. })));
    }
}
