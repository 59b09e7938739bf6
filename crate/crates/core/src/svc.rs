//! C-SVC on a precomputed kernel, trained with SMO.
//!
//! The dual is solved in the minimisation form
//!
//! ```text
//! min_α  ½ αᵀQα − eᵀα    s.t.  yᵀα = 0,  0 ≤ α_i ≤ C,    Q_ij = y_i y_j K_ij
//! ```
//!
//! with `y ∈ {−1, +1}` (label 1 ↦ +1). Each step picks the maximal
//! KKT-violating pair and solves the two-variable subproblem exactly.

use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Floor for the curvature of a two-variable step.
pub const CURVATURE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvcParams {
    pub c: f64,
    /// Stop once the maximal KKT violation drops below this.
    pub tol: f64,
    pub max_iter: u64,
    /// Keep the dual objective after every update (diagnostics only).
    pub record_objective: bool,
}

impl Default for SvcParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_iter: 10_000_000,
            record_objective: false,
        }
    }
}

impl SvcParams {
    pub fn with_c(c: f64) -> Self {
        Self { c, ..Self::default() }
    }
}

/// Trained C-SVC. `decision(x) = Σ_i dual_coef_i · K(x, x_i) + bias`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvcModel {
    /// `α_i · y_i` for every training sample.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    /// Indices with `α_i > 0`, ascending.
    pub support: Vec<usize>,
    pub c: f64,
    /// Set when training saw one class only; the model then predicts it.
    pub degenerate: Option<u8>,
    pub iterations: u64,
    pub converged: bool,
    /// Dual objective `Σα − ½αᵀQα` at the solution.
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
    /// Optional pointer to the training kernel's sidecar.
    #[serde(default)]
    pub kernel_sidecar_reference: Option<String>,
}

impl SvcModel {
    pub fn n_train(&self) -> usize {
        self.dual_coef.len()
    }

    /// Recovers `α_i = |dual_coef_i|`.
    pub fn alphas(&self) -> Vec<f64> {
        self.dual_coef.iter().map(|v| v.abs()).collect()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        serde_json::to_writer_pretty(File::create(path)?, self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }
}

fn sign(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Trains on a square symmetric kernel with `{0, 1}` labels.
pub fn train(kernel: &Matrix, labels: &[u8], params: &SvcParams) -> Result<SvcModel> {
    let n = labels.len();
    if kernel.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "kernel is {}x{} but there are {n} labels",
            kernel.rows(),
            kernel.cols()
        )));
    }
    kernel.check_symmetric(crate::kernels::TRAIN_SYMMETRY_TOL)?;
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidInput(format!("label {bad} is not binary")));
    }
    if !(params.c > 0.0) || !params.c.is_finite() {
        return Err(Error::InvalidInput(format!(
            "C must be positive, got {}",
            params.c
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("no training samples".into()));
    }

    let first = labels[0];
    if labels.iter().all(|&l| l == first) {
        return Ok(SvcModel {
            dual_coef: vec![0.0; n],
            bias: sign(first),
            support: Vec::new(),
            c: params.c,
            degenerate: Some(first),
            iterations: 0,
            converged: true,
            objective: 0.0,
            objective_trace: Vec::new(),
            kernel_sidecar_reference: None,
        });
    }

    let c = params.c;
    let y: Vec<f64> = labels.iter().map(|&l| sign(l)).collect();
    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα − eᵀα
    let mut grad = vec![-1.0; n];
    let mut trace = Vec::new();
    let mut iterations = 0u64;
    let mut converged = false;

    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    while iterations < params.max_iter {
        // maximal violating pair
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < params.tol {
            converged = true;
            break;
        }

        let kii = kernel[(i, i)];
        let kjj = kernel[(j, j)];
        let kij = kernel[(i, j)];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            // Q_ij = −K_ij
            let quad = (kii + kjj + 2.0 * -kij).max(CURVATURE_FLOOR);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (kii + kjj - 2.0 * kij).max(CURVATURE_FLOOR);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;

        let di = (ai - old_i) * y[i];
        let dj = (aj - old_j) * y[j];
        for t in 0..n {
            grad[t] += y[t] * (kernel[(t, i)] * di + kernel[(t, j)] * dj);
        }
        iterations += 1;
        if params.record_objective {
            trace.push(dual_objective(&alpha, &grad));
        }
    }
    if !converged {
        log::warn!(
            "SMO stopped at the {}-update cap before reaching tol {}",
            params.max_iter,
            params.tol
        );
    }

    let bias = -rho(&alpha, &grad, &y, c);
    let dual_coef: Vec<f64> = alpha.iter().zip(&y).map(|(a, yy)| a * yy).collect();
    let support = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    Ok(SvcModel {
        dual_coef,
        bias,
        support,
        c,
        degenerate: None,
        iterations,
        converged,
        objective: dual_objective(&alpha, &grad),
        objective_trace: trace,
        kernel_sidecar_reference: None,
    })
}

/// `Σα − ½αᵀQα`, using `∇ = Qα − e` so that `αᵀQα = αᵀ(∇ + e)`.
fn dual_objective(alpha: &[f64], grad: &[f64]) -> f64 {
    -0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
}

/// Offset `ρ` (bias = −ρ): mean of `y_t ∇_t` over free vectors, or the
/// midpoint of the interval allowed by the bounded ones.
fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else {
        0.5 * (ub + lb)
    }
}

/// `Σ_i dual_coef_i · K(test_j, train_i) + bias` for every test row.
pub fn decision_scores(model: &SvcModel, k_cross: &Matrix) -> Result<Vec<f64>> {
    if k_cross.cols() != model.n_train() {
        return Err(Error::Dimension(format!(
            "cross kernel has {} columns, model was trained on {}",
            k_cross.cols(),
            model.n_train()
        )));
    }
    Ok((0..k_cross.rows())
        .into_par_iter()
        .map(|r| {
            let row = k_cross.row(r);
            model
                .support
                .iter()
                .map(|&i| model.dual_coef[i] * row[i])
                .sum::<f64>()
                + model.bias
        })
        .collect())
}

/// Label 1 iff the score is strictly positive.
pub fn predict(model: &SvcModel, k_cross: &Matrix) -> Result<Vec<u8>> {
    Ok(labels_from_scores(&decision_scores(model, k_cross)?))
}

pub fn labels_from_scores(scores: &[f64]) -> Vec<u8> {
    scores.iter().map(|&s| (s > 0.0) as u8).collect()
}
