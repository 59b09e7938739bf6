//! Standardise → PCA-q → MinMax[−1, 1] preprocessing, fitted on the training
//! split only, plus dataset loading and the stratified split.

mod dataset;
mod split;

use serde::{Deserialize, Serialize};

pub use dataset::{Dataset, EmbeddingManifest, MIN_SAMPLES};
pub(crate) use split::apportion;
pub use split::{split, SplitIndices, MIN_CLASS_SIZE};

use crate::error::{Error, Result};
use crate::numerics::{sym_eigen, Matrix};

/// Floor applied to per-feature standard deviations.
pub const STD_FLOOR: f64 = 1e-12;
/// Eigenvalues below this fraction of the largest count as rank-deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Standardisation statistics and every principal direction of the
/// standardised training matrix. Truncating to `q` components is cheap, so
/// one basis serves a whole qubit sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Principal directions as rows, in descending eigenvalue order.
    pub components: Matrix,
    /// Eigenvalues of `ZᵀZ` matching `components`.
    pub eigenvalues: Vec<f64>,
    pub total_variance: f64,
    /// Standardised training rows, kept to derive MinMax bounds per `q`.
    train_scores: Matrix,
}

/// A fitted preprocessing chain for one qubit count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// `q × D`, orthonormal rows.
    pub pca_components: Matrix,
    pub pca_explained_fraction: Vec<f64>,
    pub minmax_lo: Vec<f64>,
    pub minmax_hi: Vec<f64>,
}

impl PcaBasis {
    /// Fits means, standard deviations and principal directions on the rows
    /// in `train_idx`.
    pub fn fit(features: &Matrix, train_idx: &[usize]) -> Result<Self> {
        let n = train_idx.len();
        let d = features.cols();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 training rows, got {n}"
            )));
        }
        if let Some(&bad) = train_idx.iter().find(|&&i| i >= features.rows()) {
            return Err(Error::Dimension(format!("train index {bad} out of range")));
        }
        let x = features.select_rows(train_idx);

        let mut means = vec![0.0; d];
        for row in x.row_iter() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut stds = vec![0.0; d];
        for row in x.row_iter() {
            for ((s, v), m) in stds.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut stds {
            *s = (*s / n as f64).sqrt().max(STD_FLOOR);
        }

        let z = Matrix::from_fn(n, d, |i, j| (x[(i, j)] - means[j]) / stds[j]);

        let (eigenvalues, components) = if d <= n {
            let cov = z.transpose().matmul(&z)?;
            let eig = sym_eigen(&cov)?;
            (eig.values, eig.vectors.transpose())
        } else {
            // Fewer samples than dimensions: diagonalise the Gram matrix and
            // map its eigenvectors back, v = Zᵀu / √λ.
            let gram = z.matmul_transposed(&z)?;
            let eig = sym_eigen(&gram)?;
            let lmax = eig.values[0].max(0.0);
            let keep: Vec<usize> = (0..n).filter(|&k| eig.values[k] > RANK_TOL * lmax).collect();
            let mut comps = Matrix::zeros(keep.len(), d);
            for (r, &k) in keep.iter().enumerate() {
                let scale = 1.0 / eig.values[k].sqrt();
                for i in 0..n {
                    let u = eig.vectors[(i, k)] * scale;
                    for (c, zv) in comps.row_mut(r).iter_mut().zip(z.row(i)) {
                        *c += u * zv;
                    }
                }
            }
            (keep.iter().map(|&k| eig.values[k]).collect(), comps)
        };

        let mut components = components;
        for r in 0..components.rows() {
            canonical_sign(components.row_mut(r));
        }
        let total_variance = z.data().iter().map(|v| v * v).sum();
        Ok(Self {
            means,
            stds,
            components,
            eigenvalues,
            total_variance,
            train_scores: z,
        })
    }

    /// Number of directions with eigenvalue above `RANK_TOL · λ_max`.
    pub fn rank(&self) -> usize {
        let lmax = self.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
        self.eigenvalues
            .iter()
            .take(self.components.rows())
            .filter(|&&l| l > RANK_TOL * lmax)
            .count()
    }

    /// Truncates to `q` components and fixes MinMax bounds on the training rows.
    pub fn truncate(&self, q: usize) -> Result<FittedPipeline> {
        if q == 0 {
            return Err(Error::InvalidInput("q must be at least 1".into()));
        }
        let rank = self.rank();
        if q > rank {
            return Err(Error::InvalidInput(format!(
                "q = {q} exceeds the training data rank {rank}"
            )));
        }
        let d = self.means.len();
        let comps = Matrix::from_fn(q, d, |r, j| self.components[(r, j)]);
        let explained = self.eigenvalues[..q]
            .iter()
            .map(|l| l / self.total_variance)
            .collect();
        let scores = self.train_scores.matmul_transposed(&comps)?;
        let mut lo = vec![f64::INFINITY; q];
        let mut hi = vec![f64::NEG_INFINITY; q];
        for row in scores.row_iter() {
            for k in 0..q {
                lo[k] = lo[k].min(row[k]);
                hi[k] = hi[k].max(row[k]);
            }
        }
        if let Some(k) = (0..q).find(|&k| !(hi[k] > lo[k])) {
            return Err(Error::Degenerate(format!(
                "principal component {k} is constant on the training rows"
            )));
        }
        Ok(FittedPipeline {
            means: self.means.clone(),
            stds: self.stds.clone(),
            pca_components: comps,
            pca_explained_fraction: explained,
            minmax_lo: lo,
            minmax_hi: hi,
        })
    }
}

/// Flips `v` so its largest-magnitude coordinate (first on ties) is positive.
fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Fits the full chain for `q` components on the training rows of `ds`.
pub fn fit(ds: &Dataset, train_idx: &[usize], q: usize) -> Result<FittedPipeline> {
    if q > train_idx.len().min(ds.dim()) {
        return Err(Error::InvalidInput(format!(
            "q = {q} exceeds min(|train| = {}, D = {})",
            train_idx.len(),
            ds.dim()
        )));
    }
    PcaBasis::fit(&ds.features, train_idx)?.truncate(q)
}

impl FittedPipeline {
    pub fn q(&self) -> usize {
        self.pca_components.rows()
    }

    /// Standardise and project (PCA scores, before MinMax).
    pub fn project(&self, rows: &Matrix) -> Result<Matrix> {
        let d = self.means.len();
        if rows.cols() != d {
            return Err(Error::Dimension(format!(
                "rows have {} columns, pipeline was fitted on {d}",
                rows.cols()
            )));
        }
        let z = Matrix::from_fn(rows.rows(), d, |i, j| {
            (rows[(i, j)] - self.means[j]) / self.stds[j]
        });
        z.matmul_transposed(&self.pca_components)
    }

    /// Full chain; training rows land in `[−1, 1]`, other rows are not clipped.
    pub fn transform(&self, rows: &Matrix) -> Result<Matrix> {
        let scores = self.project(rows)?;
        let q = self.q();
        let out = Matrix::from_fn(scores.rows(), q, |i, k| {
            2.0 * (scores[(i, k)] - self.minmax_lo[k]) / (self.minmax_hi[k] - self.minmax_lo[k]) - 1.0
        });
        let overflow = out.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if overflow > 1.0 {
            log::debug!("transformed rows exceed [-1, 1]; max |value| = {overflow:.4}");
        }
        Ok(out)
    }
}
