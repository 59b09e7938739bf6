//! Gram-matrix construction for quantum and classical kernels, plus the four
//! normalisation modes.

mod io;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{squared_distance, Matrix};
use crate::statevec::{bsp_state, fidelity_unchecked, pauli_z_expectations, CircuitConfig, StateVector};

pub use io::{feature_hash, read_qkmx, sidecar_path, write_qkmx, KernelSidecar, QKMX_MAGIC, QKMX_VERSION};

/// Symmetry tolerance for square train kernels.
pub const TRAIN_SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    QuantumFidelity,
    Projected,
    Linear,
    Rbf,
}

impl KernelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelKind::QuantumFidelity => "quantum_fidelity",
            KernelKind::Projected => "projected",
            KernelKind::Linear => "linear",
            KernelKind::Rbf => "rbf",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantum_fidelity" | "quantum" => Ok(KernelKind::QuantumFidelity),
            "projected" => Ok(KernelKind::Projected),
            "linear" => Ok(KernelKind::Linear),
            "rbf" => Ok(KernelKind::Rbf),
            other => Err(Error::InvalidInput(format!("unknown kernel kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    Trace,
    Frobenius,
    Cosine,
}

impl Normalization {
    pub const ALL: [Normalization; 4] = [
        Normalization::None,
        Normalization::Trace,
        Normalization::Frobenius,
        Normalization::Cosine,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Normalization::None => "none",
            Normalization::Trace => "trace",
            Normalization::Frobenius => "frobenius",
            Normalization::Cosine => "cosine",
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "trace" => Ok(Normalization::Trace),
            "frobenius" => Ok(Normalization::Frobenius),
            "cosine" => Ok(Normalization::Cosine),
            other => Err(Error::InvalidInput(format!("unknown normalization `{other}`"))),
        }
    }
}

/// A Gram matrix together with how it was built and scaled.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    pub values: Matrix,
    pub kind: KernelKind,
    pub normalization: Normalization,
    /// Trace of the raw training kernel, recorded under trace normalisation.
    pub train_trace: Option<f64>,
}

impl KernelMatrix {
    pub fn raw(values: Matrix, kind: KernelKind) -> Self {
        Self {
            values,
            kind,
            normalization: Normalization::None,
            train_trace: None,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }
}

/// Training-side quantities needed to normalise test blocks consistently.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mode: Normalization,
    /// Divisor used for trace/frobenius modes (1 otherwise).
    pub scale: f64,
    /// Raw training diagonal, used by cosine mode.
    pub train_diag: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct KernelOptions {
    /// Upper bound on bytes spent caching prepared statevectors. `None`
    /// caches every state.
    pub memory_cap_bytes: Option<usize>,
}

/// Prepares the BSP statevector of every row.
pub fn prepare_states(x: &Matrix, cfg: &CircuitConfig) -> Result<Vec<StateVector>> {
    check_qubit_columns(x, cfg)?;
    (0..x.rows())
        .into_par_iter()
        .map(|i| bsp_state(x.row(i), cfg))
        .collect()
}

fn check_qubit_columns(x: &Matrix, cfg: &CircuitConfig) -> Result<()> {
    cfg.validate()?;
    if x.cols() != cfg.num_qubits {
        return Err(Error::Dimension(format!(
            "feature matrix has {} columns but the circuit has {} qubits",
            x.cols(),
            cfg.num_qubits
        )));
    }
    Ok(())
}

/// Fidelity kernel `|⟨ψ(left_i)|ψ(right_j)⟩|²` with every statevector cached.
pub fn quantum_kernel(left: &Matrix, right: &Matrix, cfg: &CircuitConfig) -> Result<KernelMatrix> {
    quantum_kernel_with(left, right, cfg, &KernelOptions::default())
}

/// Fidelity kernel under a statevector memory budget.
///
/// When `left` and `right` hold the same rows only the upper triangle is
/// evaluated and mirrored. If the states for both sides do not fit in
/// `memory_cap_bytes`, rows are processed in blocks and the states of each
/// column block are re-prepared per row stripe. Both paths evaluate every
/// entry with the same arithmetic, so they agree bit for bit.
pub fn quantum_kernel_with(
    left: &Matrix,
    right: &Matrix,
    cfg: &CircuitConfig,
    opts: &KernelOptions,
) -> Result<KernelMatrix> {
    check_qubit_columns(left, cfg)?;
    check_qubit_columns(right, cfg)?;
    let symmetric = left == right;
    let (nl, nr) = (left.rows(), right.rows());

    let mut out = Matrix::zeros(nl, nr);
    match blocked_rows(nl, nr, symmetric, cfg, opts) {
        Some(block) => {
            log::info!("statevector cache exceeds the memory cap; using {block}-row blocks");
            for r0 in (0..nl).step_by(block) {
                let r1 = (r0 + block).min(nl);
                let left_states = prepare_states(&left.select_rows(&(r0..r1).collect::<Vec<_>>()), cfg)?;
                let c_start = if symmetric { r0 } else { 0 };
                for c0 in (c_start..nr).step_by(block) {
                    let c1 = (c0 + block).min(nr);
                    let right_states =
                        prepare_states(&right.select_rows(&(c0..c1).collect::<Vec<_>>()), cfg)?;
                    fill_block(&mut out, &left_states, r0, &right_states, c0, symmetric);
                }
            }
        }
        None => {
            let left_states = prepare_states(left, cfg)?;
            if symmetric {
                fill_block(&mut out, &left_states, 0, &left_states, 0, true);
            } else {
                let right_states = prepare_states(right, cfg)?;
                fill_block(&mut out, &left_states, 0, &right_states, 0, false);
            }
        }
    }
    if symmetric {
        mirror_upper(&mut out);
    }
    Ok(KernelMatrix::raw(out, KernelKind::QuantumFidelity))
}

/// Block size of the row-blocked path, or `None` when every statevector fits
/// under the cap.
pub fn blocked_rows(
    n_left: usize,
    n_right: usize,
    symmetric: bool,
    cfg: &CircuitConfig,
    opts: &KernelOptions,
) -> Option<usize> {
    let per_state = cfg.state_bytes();
    let needed = if symmetric { n_left } else { n_left + n_right } * per_state;
    match opts.memory_cap_bytes {
        Some(cap) if needed > cap => Some((cap / (2 * per_state)).max(1)),
        _ => None,
    }
}

/// Writes fidelities of `left_states × right_states` into `out` at the given
/// offsets; with `upper_only`, entries below the global diagonal are skipped.
fn fill_block(
    out: &mut Matrix,
    left_states: &[StateVector],
    row_offset: usize,
    right_states: &[StateVector],
    col_offset: usize,
    upper_only: bool,
) {
    let cols = out.cols();
    let rows = left_states.len();
    out.data_mut()[row_offset * cols..(row_offset + rows) * cols]
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(i, row)| {
            let gi = row_offset + i;
            let a = &left_states[i];
            for (j, b) in right_states.iter().enumerate() {
                let gj = col_offset + j;
                if upper_only && gj < gi {
                    continue;
                }
                row[gj] = fidelity_unchecked(a, b);
            }
        });
}

fn mirror_upper(m: &mut Matrix) {
    let n = m.rows();
    for i in 0..n {
        for j in (i + 1)..n {
            m[(j, i)] = m[(i, j)];
        }
    }
}

/// Per-sample Pauli-Z expectation vectors (`n × q`, entries in `[−1, 1]`).
pub fn pauli_z_features(x: &Matrix, cfg: &CircuitConfig) -> Result<Matrix> {
    check_qubit_columns(x, cfg)?;
    let rows: Vec<Vec<f64>> = (0..x.rows())
        .into_par_iter()
        .map(|i| bsp_state(x.row(i), cfg).map(|s| pauli_z_expectations(&s)))
        .collect::<Result<_>>()?;
    Matrix::from_rows(&rows)
}

/// Projected quantum kernel: an RBF kernel over Pauli-Z expectation vectors.
pub fn projected_kernel(left_z: &Matrix, right_z: &Matrix, gamma: f64) -> Result<KernelMatrix> {
    for z in [left_z, right_z] {
        if let Some(v) = z.data().iter().find(|v| v.abs() > 1.0 + 1e-12) {
            return Err(Error::InvalidInput(format!(
                "Pauli-Z expectation {v} outside [-1, 1]"
            )));
        }
    }
    let mut k = rbf_kernel(left_z, right_z, gamma)?;
    k.kind = KernelKind::Projected;
    Ok(k)
}

/// `⟨x_i, y_j⟩`.
pub fn linear_kernel(left: &Matrix, right: &Matrix) -> Result<KernelMatrix> {
    let values = left.matmul_transposed(right)?;
    Ok(KernelMatrix::raw(values, KernelKind::Linear))
}

/// `exp(−γ‖x_i − y_j‖²)`.
pub fn rbf_kernel(left: &Matrix, right: &Matrix, gamma: f64) -> Result<KernelMatrix> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if left.cols() != right.cols() {
        return Err(Error::Dimension(format!(
            "row widths differ: {} vs {}",
            left.cols(),
            right.cols()
        )));
    }
    let symmetric = left == right;
    let n = right.rows();
    let mut out = Matrix::zeros(left.rows(), n);
    if n > 0 {
        out.data_mut().par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let a = left.row(i);
            for (j, o) in row.iter_mut().enumerate() {
                if symmetric && j < i {
                    continue;
                }
                *o = (-gamma * squared_distance(a, right.row(j))).exp();
            }
        });
    }
    if symmetric {
        mirror_upper(&mut out);
    }
    Ok(KernelMatrix::raw(out, KernelKind::Rbf))
}

/// `1 / (q · Var[x])` with the population variance pooled over every entry.
pub fn scale_gamma(x: &Matrix) -> Result<f64> {
    let n = x.data().len();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "scale gamma needs at least 2 entries, got {n}"
        )));
    }
    // Welford
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &v) in x.data().iter().enumerate() {
        let delta = v - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (v - mean);
    }
    let var = m2 / n as f64;
    if !(var > 0.0) {
        return Err(Error::Degenerate("feature matrix has zero variance".into()));
    }
    Ok(1.0 / (x.cols() as f64 * var))
}

/// Normalises a square training kernel and returns the statistics needed to
/// treat matching test blocks the same way.
pub fn normalize(k: &KernelMatrix, mode: Normalization) -> Result<(KernelMatrix, NormStats)> {
    if k.normalization != Normalization::None {
        return Err(Error::InvalidInput(format!(
            "kernel already {}-normalised",
            k.normalization
        )));
    }
    k.values.check_symmetric(TRAIN_SYMMETRY_TOL)?;
    let diag = k.values.diagonal();
    let (values, scale) = match mode {
        Normalization::None => (k.values.clone(), 1.0),
        Normalization::Trace => {
            let tr = k.values.trace();
            if !(tr.abs() > 0.0) {
                return Err(Error::Degenerate("kernel trace is zero".into()));
            }
            (k.values.scaled(1.0 / tr), tr)
        }
        Normalization::Frobenius => {
            let f = k.values.frobenius_norm();
            if !(f > 0.0) {
                return Err(Error::Degenerate("kernel Frobenius norm is zero".into()));
            }
            (k.values.scaled(1.0 / f), f)
        }
        Normalization::Cosine => {
            check_positive_diag(&diag, "training")?;
            let n = diag.len();
            (
                Matrix::from_fn(n, n, |i, j| k.values[(i, j)] / (diag[i] * diag[j]).sqrt()),
                1.0,
            )
        }
    };
    let stats = NormStats {
        mode,
        scale,
        train_diag: diag,
    };
    let out = KernelMatrix {
        values,
        kind: k.kind,
        normalization: mode,
        train_trace: (mode == Normalization::Trace).then_some(scale),
    };
    Ok((out, stats))
}

/// Applies training normalisation to a `test × train` block.
///
/// Cosine mode needs each test sample's self-kernel `k(x, x)` in `test_self`.
pub fn normalize_test(
    k_test: &KernelMatrix,
    stats: &NormStats,
    test_self: Option<&[f64]>,
) -> Result<KernelMatrix> {
    if k_test.values.cols() != stats.train_diag.len() {
        return Err(Error::Dimension(format!(
            "test kernel has {} columns, training set has {}",
            k_test.values.cols(),
            stats.train_diag.len()
        )));
    }
    let values = match stats.mode {
        Normalization::None => k_test.values.clone(),
        Normalization::Trace | Normalization::Frobenius => k_test.values.scaled(1.0 / stats.scale),
        Normalization::Cosine => {
            let own = test_self
                .ok_or_else(|| Error::InvalidInput("cosine normalisation needs test self-kernels".into()))?;
            if own.len() != k_test.values.rows() {
                return Err(Error::Dimension(format!(
                    "{} self-kernel values for {} test rows",
                    own.len(),
                    k_test.values.rows()
                )));
            }
            check_positive_diag(own, "test")?;
            let (r, c) = k_test.values.shape();
            Matrix::from_fn(r, c, |i, j| {
                k_test.values[(i, j)] / (own[i] * stats.train_diag[j]).sqrt()
            })
        }
    };
    Ok(KernelMatrix {
        values,
        kind: k_test.kind,
        normalization: stats.mode,
        train_trace: (stats.mode == Normalization::Trace).then_some(stats.scale),
    })
}

fn check_positive_diag(diag: &[f64], side: &str) -> Result<()> {
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Degenerate(format!(
            "{side} self-kernel {i} is {}; cosine normalisation undefined",
            diag[i]
        )));
    }
    Ok(())
}

/// Self-kernel values `k(x_i, x_i)` for a kernel kind, without building the
/// full matrix.
pub fn self_kernel(kind: KernelKind, x: &Matrix) -> Vec<f64> {
    match kind {
        KernelKind::Linear => x.row_iter().map(|r| r.iter().map(|v| v * v).sum()).collect(),
        KernelKind::QuantumFidelity | KernelKind::Projected | KernelKind::Rbf => vec![1.0; x.rows()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn random(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed);
        Matrix::from_fn(n, d, |_, _| rng.next_f64() * 2.0 - 1.0)
    }

    #[test]
    fn identical_samples_give_ones() {
        let x = Matrix::from_rows(&[[0.3, -0.2], [0.3, -0.2]]).unwrap();
        let k = quantum_kernel(&x, &x, &CircuitConfig::simple(2).unwrap()).unwrap();
        for v in k.values.data() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn train_kernel_unit_diagonal_and_symmetric() {
        let x = random(15, 4, 1);
        let k = quantum_kernel(&x, &x, &CircuitConfig::simple(4).unwrap()).unwrap();
        assert_eq!(k.values.max_asymmetry(), 0.0);
        for i in 0..15 {
            assert!((k.values[(i, i)] - 1.0).abs() < 1e-12);
        }
        assert!(k
            .values
            .data()
            .iter()
            .all(|&v| (-1e-15..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn blocked_assembly_is_bit_identical() {
        let x = random(13, 3, 2);
        let y = random(7, 3, 3);
        let cfg = CircuitConfig::simple(3).unwrap();
        let tiny = KernelOptions {
            memory_cap_bytes: Some(3 * cfg.state_bytes()),
        };
        assert_eq!(
            quantum_kernel(&x, &x, &cfg).unwrap(),
            quantum_kernel_with(&x, &x, &cfg, &tiny).unwrap()
        );
        assert_eq!(
            quantum_kernel(&x, &y, &cfg).unwrap(),
            quantum_kernel_with(&x, &y, &cfg, &tiny).unwrap()
        );
    }

    #[test]
    fn column_mismatch() {
        let x = random(3, 3, 4);
        assert!(quantum_kernel(&x, &x, &CircuitConfig::simple(4).unwrap()).is_err());
        assert!(linear_kernel(&x, &random(3, 2, 5)).is_err());
    }

    #[test]
    fn rbf_analytic_values() {
        let x = Matrix::from_rows(&[[0.0], [2f64.ln().sqrt()]]).unwrap();
        let k = rbf_kernel(&x, &x, 1.0).unwrap();
        assert_eq!(k.values[(0, 0)], 1.0);
        assert!((k.values[(0, 1)] - 0.5).abs() < 1e-15);
        assert!(rbf_kernel(&x, &x, 0.0).is_err());
        assert!(rbf_kernel(&x, &x, -1.0).is_err());
    }

    #[test]
    fn projected_analytic_values() {
        let a = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[[-1.0, 0.0]]).unwrap();
        let k = projected_kernel(&a, &b, 0.25).unwrap();
        assert!((k.values[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(projected_kernel(&a, &a, 3.0).unwrap().values[(0, 0)], 1.0);
        assert!(projected_kernel(&a, &b, 0.0).is_err());
        let bad = Matrix::from_rows(&[[1.5, 0.0]]).unwrap();
        assert!(projected_kernel(&bad, &a, 1.0).is_err());
    }

    #[test]
    fn linear_on_orthonormal_rows() {
        let x = Matrix::identity(3);
        assert_eq!(linear_kernel(&x, &x).unwrap().values, Matrix::identity(3));
    }

    #[test]
    fn scale_gamma_cases() {
        let x = Matrix::from_rows(&[[-1.0], [1.0], [-1.0], [1.0]]).unwrap();
        assert!((scale_gamma(&x).unwrap() - 1.0).abs() < 1e-15);
        let c = Matrix::from_rows(&[[2.0, 2.0], [2.0, 2.0]]).unwrap();
        assert!(matches!(scale_gamma(&c), Err(Error::Degenerate(_))));
    }

    #[test]
    fn normalisation_modes() {
        let x = random(10, 3, 9);
        let k = quantum_kernel(&x, &x, &CircuitConfig::simple(3).unwrap()).unwrap();

        let (t, stats) = normalize(&k, Normalization::Trace).unwrap();
        assert!((t.values.trace() - 1.0).abs() < 1e-12);
        assert_eq!(t.train_trace, Some(k.values.trace()));
        let test = quantum_kernel(&random(4, 3, 10), &x, &CircuitConfig::simple(3).unwrap()).unwrap();
        let tt = normalize_test(&test, &stats, None).unwrap();
        assert!((tt.values[(1, 2)] - test.values[(1, 2)] / k.values.trace()).abs() < 1e-15);

        let (c, _) = normalize(&k, Normalization::Cosine).unwrap();
        for (a, b) in c.values.data().iter().zip(k.values.data()) {
            assert!((a - b).abs() < 1e-12);
        }

        let eye = KernelMatrix::raw(Matrix::identity(2), KernelKind::Linear);
        let (f, _) = normalize(&eye, Normalization::Frobenius).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((f.values[(0, 0)] - h).abs() < 1e-15 && f.values[(0, 1)] == 0.0);

        let (n, _) = normalize(&eye, Normalization::None).unwrap();
        assert_eq!(n.values, eye.values);
    }

    #[test]
    fn normalisation_errors() {
        let zero = KernelMatrix::raw(Matrix::zeros(2, 2), KernelKind::Linear);
        assert!(normalize(&zero, Normalization::Trace).is_err());
        assert!(normalize(&zero, Normalization::Frobenius).is_err());
        assert!(normalize(&zero, Normalization::Cosine).is_err());

        let k = KernelMatrix::raw(Matrix::identity(2), KernelKind::Linear);
        let (_, stats) = normalize(&k, Normalization::Cosine).unwrap();
        let test = KernelMatrix::raw(Matrix::zeros(1, 2), KernelKind::Linear);
        assert!(normalize_test(&test, &stats, None).is_err());
        assert!(normalize_test(&test, &stats, Some(&[0.0])).is_err());
        assert!(normalize_test(&test, &stats, Some(&[2.0])).is_ok());
    }

    #[test]
    fn cosine_test_block_uses_both_diagonals() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0]]).unwrap();
        let y = Matrix::from_rows(&[[0.0, 3.0]]).unwrap();
        let k = linear_kernel(&x, &x).unwrap();
        let (_, stats) = normalize(&k, Normalization::Cosine).unwrap();
        let kt = linear_kernel(&y, &x).unwrap();
        let own = self_kernel(KernelKind::Linear, &y);
        let t = normalize_test(&kt, &stats, Some(&own)).unwrap();
        assert_eq!(t.values[(0, 0)], 0.0);
        assert!((t.values[(0, 1)] - 3.0 / (3.0 * 2f64.sqrt())).abs() < 1e-15);
    }
}
