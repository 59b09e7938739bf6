//! Synthetic labelled embeddings for tests, benchmarks and demos.

use crate::error::Result;
use crate::numerics::{dot, Matrix, Rng};
use crate::pipeline::Dataset;

/// Parameters of [`synthetic_dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub dim: usize,
    /// Target share of class 1.
    pub minority_fraction: f64,
    /// Probability of flipping a label after assignment.
    pub label_noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(n: usize, dim: usize, seed: u64) -> Self {
        Self {
            n,
            dim,
            minority_fraction: 0.3,
            label_noise: 0.05,
            seed,
        }
    }
}

/// Full-rank embeddings from a bounded factor model with a radial minority
/// class.
///
/// Up to `MAX_FACTORS` uniform latent factors `g_k` with scales `0.4^k` load
/// on every feature through orthonormalised random sign vectors, plus small
/// independent noise. Sign loadings give all features nearly equal variance,
/// so standardisation leaves the factor geometry intact; the wide scale gaps
/// make the principal directions follow the factors and the PCA scores keep
/// their bounded, range-filling distribution. Class 1 is the disc around the
/// origin in `(g_0, g_1)` covering `minority_fraction` of their square
/// support, which no single hyperplane isolates.
pub fn synthetic_dataset(spec: &SynthSpec) -> Result<Dataset> {
    let mut rng = Rng::new(spec.seed);
    let d = spec.dim.max(2);
    let m = d.min(MAX_FACTORS);
    let loadings = sign_basis(d, m, &mut rng);
    let half = 3f64.sqrt();
    // disc area π r0² over the square area (2·half)², capped at the inscribed disc
    let r0 = (4.0 * half * half * spec.minority_fraction / std::f64::consts::PI)
        .sqrt()
        .min(half);

    let mut labels = Vec::with_capacity(spec.n);
    let mut values = Vec::with_capacity(spec.n * d);
    for _ in 0..spec.n {
        let g: Vec<f64> = (0..m).map(|_| half * (2.0 * rng.next_f64() - 1.0)).collect();
        let mut label = (g[0].hypot(g[1]) < r0) as u8;
        if rng.next_f64() < spec.label_noise {
            label ^= 1;
        }
        labels.push(label);
        for r in 0..d {
            let x: f64 = loadings
                .iter()
                .zip(&g)
                .enumerate()
                .map(|(k, (l, gk))| l[r] * SCALE_DECAY.powi(k as i32) * gk)
                .sum();
            values.push(x + NOISE_SD * rng.normal());
        }
    }
    let ids = (0..spec.n).map(|i| format!("synth{i:05}")).collect();
    Dataset::new(ids, labels, Matrix::new(spec.n, d, values)?)
}

const MAX_FACTORS: usize = 12;
const SCALE_DECAY: f64 = 0.4;
const NOISE_SD: f64 = 0.0005;

/// `m` orthonormal vectors of length `d` from Gram–Schmidt on random ±1
/// vectors.
fn sign_basis(d: usize, m: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    while basis.len() < m {
        let mut v: Vec<f64> = (0..d)
            .map(|_| if rng.next_f64() < 0.5 { -1.0 } else { 1.0 })
            .collect();
        // two passes for numerical orthogonality
        for _ in 0..2 {
            for u in &basis {
                let p = dot(u, &v);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= p * ui;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

/// Two-dimensional set whose minority class sits at the centre of a
/// majority ring, so it lies inside the majority's convex hull.
pub fn ring_dataset(n: usize, minority_fraction: f64, seed: u64) -> Result<Dataset> {
    let mut rng = Rng::new(seed);
    let n_min = ((n as f64) * minority_fraction).round() as usize;
    let mut labels = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(2 * n);
    for i in 0..n {
        let inner = i < n_min;
        let theta = std::f64::consts::TAU * rng.next_f64();
        let r = if inner {
            0.25 * rng.next_f64().sqrt()
        } else {
            1.0 + 0.1 * rng.normal()
        };
        values.push(r * theta.cos());
        values.push(r * theta.sin());
        labels.push(inner as u8);
    }
    let ids = (0..n).map(|i| format!("ring{i:05}")).collect();
    Dataset::new(ids, labels, Matrix::new(n, 2, values)?)
}
