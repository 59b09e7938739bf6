//! Content-addressed store for raw quantum kernels.
//!
//! Entries are keyed by a hash of both feature matrices and the circuit, and
//! are never rewritten once present. Files are written under a temporary
//! name and renamed into place.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::kernels::{
    feature_hash, quantum_kernel_with, read_qkmx, write_qkmx, KernelKind, KernelMatrix, KernelOptions,
    KernelSidecar, Normalization,
};
use crate::numerics::Matrix;
use crate::statevec::CircuitConfig;

pub struct KernelCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, Arc<Matrix>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

/// Cache key for `K(left, right)` under `cfg`.
pub fn kernel_key(left: &Matrix, right: &Matrix, cfg: &CircuitConfig) -> String {
    let mut h = Sha256::new();
    h.update(b"quantum_fidelity");
    h.update((cfg.num_qubits as u64).to_le_bytes());
    h.update((cfg.reps as u64).to_le_bytes());
    h.update([u8::from(cfg.dof)]);
    h.update(feature_hash(left).as_bytes());
    h.update(feature_hash(right).as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl KernelCache {
    /// In-memory cache, mirrored to `dir` when given.
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self {
            dir,
            memory: Mutex::new(HashMap::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.qkmx")))
    }

    /// Raw fidelity kernel `K(left, right)`, computed at most once per key.
    pub fn quantum(
        &self,
        left: &Matrix,
        right: &Matrix,
        cfg: &CircuitConfig,
        opts: &KernelOptions,
    ) -> Result<Arc<Matrix>> {
        let key = kernel_key(left, right, cfg);
        if let Some(m) = self.memory.lock().unwrap().get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(Arc::clone(m));
        }
        if let Some(path) = self.path_for(&key) {
            if path.exists() {
                let (k, _) = read_qkmx(&path)?;
                if k.values.shape() == (left.rows(), right.rows()) {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(self.insert(key, k.values));
                }
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let k = quantum_kernel_with(left, right, cfg, opts)?;
        if let Some(path) = self.path_for(&key) {
            let sidecar = KernelSidecar {
                kind: KernelKind::QuantumFidelity,
                normalization: Normalization::None,
                train_trace: None,
                circuit: Some(*cfg),
                gamma: None,
                feature_hash: key.clone(),
            };
            write_atomic(&path, &k, &sidecar)?;
        }
        Ok(self.insert(key, k.values))
    }

    fn insert(&self, key: String, m: Matrix) -> Arc<Matrix> {
        let mut mem = self.memory.lock().unwrap();
        Arc::clone(mem.entry(key).or_insert_with(|| Arc::new(m)))
    }
}

fn write_atomic(path: &Path, k: &KernelMatrix, sidecar: &KernelSidecar) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    write_qkmx(&tmp, k, sidecar)?;
    let tmp_side = crate::kernels::sidecar_path(&tmp);
    std::fs::rename(&tmp_side, crate::kernels::sidecar_path(path))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
