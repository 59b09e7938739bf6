//! Kernel eigenspectrum diagnostics.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::rbf_kernel;
use crate::numerics::{sym_eigen, sym_eigenvalues, Matrix, Rng};
use crate::pipeline::apportion;

/// Eigenvalues at or below `EPS_REL · λ_max` count as zero.
pub const EPS_REL: f64 = 1e-10;
/// Above this size eigenvalues come from Householder + QL instead of Jacobi.
pub const JACOBI_MAX_N: usize = 256;
pub const GAMMA_LO: f64 = 1e-6;
pub const GAMMA_HI: f64 = 1e6;
pub const MAX_BISECTIONS: usize = 60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    pub n_positive: usize,
    pub eff_rank: f64,
    pub lambda_max: f64,
    pub threshold: f64,
}

impl SpectrumReport {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        serde_json::to_writer_pretty(File::create(path)?, self)?;
        Ok(())
    }

    /// One `index,eigenvalue` row per eigenvalue.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["index", "eigenvalue"])?;
        for (i, v) in self.eigenvalues.iter().enumerate() {
            w.write_record([i.to_string(), format!("{v:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn eigenvalues(k: &Matrix) -> Result<Vec<f64>> {
    if k.rows() <= JACOBI_MAX_N {
        Ok(sym_eigen(k)?.values)
    } else {
        sym_eigenvalues(k)
    }
}

/// Counts eigenvalues above the relative threshold and computes the Shannon
/// effective rank over them.
pub fn spectrum(k: &Matrix) -> Result<SpectrumReport> {
    if k.rows() == 0 {
        return Err(Error::InvalidInput("empty kernel".into()));
    }
    spectrum_from_eigenvalues(eigenvalues(k)?)
}

pub fn spectrum_from_eigenvalues(eigenvalues: Vec<f64>) -> Result<SpectrumReport> {
    let lambda_max = eigenvalues.first().copied().unwrap_or(0.0);
    if !(lambda_max > 0.0) {
        return Err(Error::Degenerate("kernel has no positive eigenvalue".into()));
    }
    let threshold = EPS_REL * lambda_max;
    let kept: Vec<f64> = eigenvalues.iter().copied().filter(|&l| l > threshold).collect();
    let total: f64 = kept.iter().sum();
    let entropy: f64 = kept
        .iter()
        .map(|&l| {
            let p = l / total;
            -p * p.ln()
        })
        .sum();
    Ok(SpectrumReport {
        n_positive: kept.len(),
        eff_rank: entropy.exp(),
        lambda_max,
        threshold,
        eigenvalues,
    })
}

pub fn eff_rank(k: &Matrix) -> Result<f64> {
    Ok(spectrum(k)?.eff_rank)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub subsample: usize,
    /// Rows used, ordered by class then index.
    pub indices: Vec<usize>,
    pub k_mean: f64,
    pub k_std: f64,
    pub k_var: f64,
    /// `None` when no off-diagonal pair falls in the group.
    pub within_class_mean: Option<f64>,
    pub between_class_mean: Option<f64>,
}

impl VarianceReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        serde_json::to_writer_pretty(File::create(path)?, self)?;
        Ok(())
    }
}

/// Off-diagonal statistics on a stratified random subsample of the kernel.
pub fn variance_stats(k: &Matrix, labels: &[u8], subsample: usize, rng: &mut Rng) -> Result<VarianceReport> {
    let n = k.rows();
    if !k.is_square() || labels.len() != n {
        return Err(Error::Dimension(format!(
            "kernel is {}x{} with {} labels",
            k.rows(),
            k.cols(),
            labels.len()
        )));
    }
    if subsample < 2 {
        return Err(Error::InvalidInput(format!(
            "subsample must be at least 2, got {subsample}"
        )));
    }
    if subsample > n {
        return Err(Error::InvalidInput(format!(
            "subsample {subsample} exceeds {n} rows"
        )));
    }
    let mut members: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        if l > 1 {
            return Err(Error::InvalidInput(format!("label {l} is not binary")));
        }
        members[l as usize].push(i);
    }
    let sizes = [members[0].len(), members[1].len()];
    let quota = apportion(subsample, &sizes, &sizes);
    let mut indices = Vec::with_capacity(subsample);
    for c in 0..2 {
        let mut m = members[c].clone();
        rng.shuffle(&mut m);
        let mut take = m[..quota[c]].to_vec();
        take.sort_unstable();
        indices.extend(take);
    }

    let mut sum = 0.0;
    let mut count = 0usize;
    let (mut within, mut n_within) = (0.0, 0usize);
    let (mut between, mut n_between) = (0.0, 0usize);
    for &i in &indices {
        for &j in &indices {
            if i == j {
                continue;
            }
            let v = k[(i, j)];
            sum += v;
            count += 1;
            if labels[i] == labels[j] {
                within += v;
                n_within += 1;
            } else {
                between += v;
                n_between += 1;
            }
        }
    }
    let mean = sum / count as f64;
    let mut sq = 0.0;
    for &i in &indices {
        for &j in &indices {
            if i != j {
                sq += (k[(i, j)] - mean).powi(2);
            }
        }
    }
    let var = sq / count as f64;
    Ok(VarianceReport {
        subsample,
        indices,
        k_mean: mean,
        k_std: var.sqrt(),
        k_var: var,
        within_class_mean: (n_within > 0).then(|| within / n_within as f64),
        between_class_mean: (n_between > 0).then(|| between / n_between as f64),
    })
}

/// Outcome of a γ search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaMatch {
    pub gamma: f64,
    pub eff_rank: f64,
    pub target: f64,
    pub evaluations: usize,
}

/// Finds `γ` with `|eff_rank(rbf(x, γ)) − target| ≤ tol_rel · target`.
///
/// Brackets on `log γ` starting from `γ = 1`, expanding by decades within
/// `[GAMMA_LO, GAMMA_HI]`, then bisects in log space.
pub fn rank_match_gamma(x: &Matrix, target: f64, tol_rel: f64) -> Result<GammaMatch> {
    let n = x.rows();
    if !(target > 1.0) || !(target < n as f64) {
        return Err(Error::InvalidInput(format!(
            "target rank {target} must lie strictly between 1 and {n}"
        )));
    }
    if !(tol_rel > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tolerance must be positive, got {tol_rel}"
        )));
    }
    let mut evaluations = 0usize;
    let mut eval = |log_g: f64| -> Result<f64> {
        evaluations += 1;
        eff_rank(&rbf_kernel(x, x, log_g.exp())?.values)
    };
    let tol = tol_rel * target;
    let (min_lg, max_lg) = (GAMMA_LO.ln(), GAMMA_HI.ln());
    let decade = 10f64.ln();

    let mut lo = 0.0f64;
    let mut r_lo = eval(lo)?;
    let mut hi = lo;
    let mut r_hi = r_lo;
    while r_lo > target {
        if lo <= min_lg {
            return Err(unreachable(target, r_lo, r_hi));
        }
        hi = lo;
        r_hi = r_lo;
        lo = (lo - decade).max(min_lg);
        r_lo = eval(lo)?;
    }
    while r_hi < target {
        if hi >= max_lg {
            return Err(unreachable(target, r_lo, r_hi));
        }
        lo = hi;
        r_lo = r_hi;
        hi = (hi + decade).min(max_lg);
        r_hi = eval(hi)?;
    }

    let mut best = if (r_lo - target).abs() <= (r_hi - target).abs() {
        (lo, r_lo)
    } else {
        (hi, r_hi)
    };
    for _ in 0..MAX_BISECTIONS {
        if (best.1 - target).abs() <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let r = eval(mid)?;
        if (r - target).abs() < (best.1 - target).abs() {
            best = (mid, r);
        }
        if r < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best.1 - target).abs() > tol {
        log::warn!(
            "gamma search stopped at eff_rank {} for target {target} after {MAX_BISECTIONS} bisections",
            best.1
        );
    }
    Ok(GammaMatch {
        gamma: best.0.exp(),
        eff_rank: best.1,
        target,
        evaluations,
    })
}

fn unreachable(target: f64, reach_lo: f64, reach_hi: f64) -> Error {
    Error::UnreachableTarget {
        target,
        lo: GAMMA_LO,
        hi: GAMMA_HI,
        reach_lo,
        reach_hi,
    }
}
