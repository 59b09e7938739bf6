//! `.qkmx` kernel files.
//!
//! Layout (little-endian): `b"QKMX"`, version `u16`, two reserved zero bytes,
//! rows `u32`, cols `u32`, then `rows × cols` row-major `f64`. Metadata lives
//! in a JSON sidecar next to the binary (`<file>.json`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{KernelKind, KernelMatrix, Normalization};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::statevec::CircuitConfig;

pub const QKMX_MAGIC: &[u8; 4] = b"QKMX";
pub const QKMX_VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSidecar {
    pub kind: KernelKind,
    pub normalization: Normalization,
    pub train_trace: Option<f64>,
    pub circuit: Option<CircuitConfig>,
    #[serde(default)]
    pub gamma: Option<f64>,
    pub feature_hash: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// SHA-256 over the shape and little-endian bytes of a matrix, hex encoded.
pub fn feature_hash(x: &Matrix) -> String {
    let mut h = Sha256::new();
    h.update((x.rows() as u64).to_le_bytes());
    h.update((x.cols() as u64).to_le_bytes());
    for v in x.data() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes the binary matrix and its JSON sidecar.
pub fn write_qkmx(path: &Path, kernel: &KernelMatrix, sidecar: &KernelSidecar) -> Result<()> {
    let (rows, cols) = kernel.values.shape();
    let too_big =
        |n: usize| u32::try_from(n).map_err(|_| Error::InvalidInput(format!("dimension {n} exceeds u32")));
    let (r32, c32) = (too_big(rows)?, too_big(cols)?);

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(QKMX_MAGIC)?;
    w.write_all(&QKMX_VERSION.to_le_bytes())?;
    w.write_all(&[0u8; 2])?;
    w.write_all(&r32.to_le_bytes())?;
    w.write_all(&c32.to_le_bytes())?;
    for v in kernel.values.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;

    let side = File::create(sidecar_path(path))?;
    serde_json::to_writer_pretty(side, sidecar)?;
    Ok(())
}

/// Reads a kernel file and its sidecar (when present).
pub fn read_qkmx(path: &Path) -> Result<(KernelMatrix, Option<KernelSidecar>)> {
    let data_err = |msg: String| Error::Data {
        path: path.to_path_buf(),
        msg,
    };
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| data_err("truncated header".into()))?;
    if &header[0..4] != QKMX_MAGIC {
        return Err(data_err("bad magic".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != QKMX_VERSION {
        return Err(data_err(format!("unsupported version {version}")));
    }
    let rows = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;

    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != rows * cols * 8 {
        return Err(data_err(format!(
            "expected {} payload bytes for {rows}x{cols}, found {}",
            rows * cols * 8,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let values = Matrix::new(rows, cols, values).map_err(|e| data_err(e.to_string()))?;

    let side_path = sidecar_path(path);
    let sidecar: Option<KernelSidecar> = if side_path.exists() {
        Some(serde_json::from_reader(BufReader::new(File::open(&side_path)?))?)
    } else {
        None
    };
    let kernel = KernelMatrix {
        values,
        kind: sidecar.as_ref().map_or(KernelKind::QuantumFidelity, |s| s.kind),
        normalization: sidecar.as_ref().map_or(Normalization::None, |s| s.normalization),
        train_trace: sidecar.as_ref().and_then(|s| s.train_trace),
    };
    Ok((kernel, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevec::Dof;

    #[test]
    fn round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.qkmx");
        let values = Matrix::from_rows(&[[1.0, 0.25, -0.5], [0.25, 1.0, 1e-300]]).unwrap();
        let k = KernelMatrix {
            values: values.clone(),
            kind: KernelKind::QuantumFidelity,
            normalization: Normalization::Trace,
            train_trace: Some(2.0),
        };
        let side = KernelSidecar {
            kind: k.kind,
            normalization: k.normalization,
            train_trace: k.train_trace,
            circuit: Some(CircuitConfig::new(3, 1, Dof::One).unwrap()),
            gamma: None,
            feature_hash: feature_hash(&values),
        };
        write_qkmx(&path, &k, &side).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"QKMX");
        assert_eq!(bytes.len(), 16 + 6 * 8);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3);

        let (back, side_back) = read_qkmx(&path).unwrap();
        assert_eq!(back, k);
        assert_eq!(side_back.unwrap(), side);
    }

    #[test]
    fn rejects_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.qkmx");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(read_qkmx(&path), Err(Error::Data { .. })));

        let mut ok = Vec::from(&QKMX_MAGIC[..]);
        ok.extend_from_slice(&1u16.to_le_bytes());
        ok.extend_from_slice(&[0, 0]);
        ok.extend_from_slice(&2u32.to_le_bytes());
        ok.extend_from_slice(&2u32.to_le_bytes());
        ok.extend_from_slice(&1.0f64.to_le_bytes());
        std::fs::write(&path, &ok).unwrap();
        assert!(matches!(read_qkmx(&path), Err(Error::Data { .. })));
    }

    #[test]
    fn hash_depends_on_shape_and_values() {
        let a = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        assert_ne!(feature_hash(&a), feature_hash(&b));
        assert_eq!(feature_hash(&a), feature_hash(&a.clone()));
        assert_eq!(feature_hash(&a).len(), 64);
    }
}
