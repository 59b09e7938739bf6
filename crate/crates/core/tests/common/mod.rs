//! Independent reference implementations used as test oracles.
#![allow(dead_code, clippy::needless_range_loop)]

use num_complex::Complex64;
use qsvm_core::numerics::{Matrix, Rng};

pub type Dense = Vec<Vec<Complex64>>;

pub fn identity(dim: usize) -> Dense {
    (0..dim)
        .map(|r| {
            (0..dim)
                .map(|c| Complex64::new((r == c) as u8 as f64, 0.0))
                .collect()
        })
        .collect()
}

pub fn mul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let m = b[0].len();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); m]; n];
    for i in 0..n {
        for k in 0..b.len() {
            let aik = a[i][k];
            for j in 0..m {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn adjoint(a: &Dense) -> Dense {
    let n = a.len();
    (0..n).map(|r| (0..n).map(|c| a[c][r].conj()).collect()).collect()
}

pub fn ry(theta: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

pub fn rz(theta: f64) -> [[Complex64; 2]; 2] {
    let z = Complex64::new(0.0, 0.0);
    [
        [Complex64::from_polar(1.0, -theta / 2.0), z],
        [z, Complex64::from_polar(1.0, theta / 2.0)],
    ]
}

pub fn mul2(a: [[Complex64; 2]; 2], b: [[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    let mut o = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            o[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    o
}

/// `I ⊗ … ⊗ g ⊗ … ⊗ I` with `g` on qubit `k` (bit `k` of the basis index).
pub fn embed(q: usize, k: usize, g: [[Complex64; 2]; 2]) -> Dense {
    let dim = 1 << q;
    let mut u = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
    for r in 0..dim {
        for c in 0..dim {
            if (r & !(1 << k)) == (c & !(1 << k)) {
                u[r][c] = g[(r >> k) & 1][(c >> k) & 1];
            }
        }
    }
    u
}

/// Permutation matrix of CNOT(control → target).
pub fn cnot(q: usize, control: usize, target: usize) -> Dense {
    let dim = 1 << q;
    let mut u = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
    for c in 0..dim {
        let r = if (c >> control) & 1 == 1 {
            c ^ (1 << target)
        } else {
            c
        };
        u[r][c] = Complex64::new(1.0, 0.0);
    }
    u
}

/// Dense product of every gate of the encoding circuit.
pub fn bsp_unitary(u: &[f64], reps: usize, three_dof: bool) -> Dense {
    let q = u.len();
    let mut total = identity(1 << q);
    for _ in 0..reps {
        for d in 0..q {
            let g = if three_dof {
                mul2(rz(u[d]), mul2(ry(u[d]), rz(u[d])))
            } else {
                ry(u[d])
            };
            total = mul(&embed(q, d, g), &total);
            total = mul(&cnot(q, d, (d + 1) % q), &total);
        }
    }
    total
}

/// First column of `U`, i.e. `U|0…0⟩`.
pub fn first_column(u: &Dense) -> Vec<Complex64> {
    u.iter().map(|row| row[0]).collect()
}

/// `|⟨0|U(x)† U(y)|0⟩|²`.
pub fn compute_uncompute(x: &[f64], y: &[f64], reps: usize, three_dof: bool) -> f64 {
    let m = mul(
        &adjoint(&bsp_unitary(x, reps, three_dof)),
        &bsp_unitary(y, reps, three_dof),
    );
    m[0][0].norm_sqr()
}

/// Solution of the C-SVC dual by projected gradient descent.
pub struct QpSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// `Σα − ½αᵀQα`.
    pub objective: f64,
}

/// Euclidean projection of `v` onto `{0 ≤ α ≤ C, yᵀα = 0}`.
///
/// `α(μ) = clip(v − μy, 0, C)` and `g(μ) = yᵀα(μ)` is non-increasing and
/// piecewise linear with kinks where a coordinate hits a bound, so the root
/// is found exactly by scanning the sorted kinks.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - mu * yi).clamp(0.0, c))
            .collect()
    };
    let g = |mu: f64| at(mu).iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>();
    let mut kinks: Vec<f64> = v
        .iter()
        .zip(y)
        .flat_map(|(vi, yi)| [vi / yi, (vi - c) / yi])
        .collect();
    kinks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let values: Vec<f64> = kinks.iter().map(|&m| g(m)).collect();
    for k in 0..kinks.len() - 1 {
        let (g0, g1) = (values[k], values[k + 1]);
        if g0 >= 0.0 && g1 <= 0.0 {
            let mu = if g0 == g1 {
                kinks[k]
            } else {
                kinks[k] + g0 * (kinks[k + 1] - kinks[k]) / (g0 - g1)
            };
            return at(mu);
        }
    }
    panic!("projection root not bracketed; both classes must be present");
}

pub fn qp_oracle(k: &Matrix, labels: &[u8], c: f64, iterations: usize) -> QpSolution {
    let n = labels.len();
    let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let q = Matrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
    // Lipschitz bound: Gershgorin
    let lip = (0..n)
        .map(|i| q.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / lip;
    let mut alpha = vec![0.0; n];
    for _ in 0..iterations {
        let grad: Vec<f64> = (0..n)
            .map(|i| q.row(i).iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>() - 1.0)
            .collect();
        let v: Vec<f64> = alpha.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
        let next = project(&v, &y, c);
        let moved = next
            .iter()
            .zip(&alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        alpha = next;
        if moved < 1e-15 {
            break;
        }
    }
    let qa: Vec<f64> = (0..n)
        .map(|i| q.row(i).iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let objective = alpha.iter().sum::<f64>() - 0.5 * alpha.iter().zip(&qa).map(|(a, b)| a * b).sum::<f64>();

    // b from margin vectors: y_i f(x_i) = 1 for 0 < α_i < C
    let f_no_bias = |i: usize| (0..n).map(|j| alpha[j] * y[j] * k[(i, j)]).sum::<f64>();
    let eps = 1e-9 * c;
    let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > eps && alpha[i] < c - eps).collect();
    let bias = if !free.is_empty() {
        free.iter().map(|&i| y[i] - f_no_bias(i)).sum::<f64>() / free.len() as f64
    } else {
        // bounds on b implied by the KKT conditions of the bounded vectors
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let r = y[i] - f_no_bias(i);
            let at_zero = alpha[i] <= eps;
            // at 0: y_i f ≥ 1; at C: y_i f ≤ 1
            if (at_zero && y[i] > 0.0) || (!at_zero && y[i] < 0.0) {
                lo = lo.max(r);
            } else {
                hi = hi.min(r);
            }
        }
        0.5 * (lo + hi)
    };
    QpSolution {
        alpha,
        bias,
        objective,
    }
}

pub fn oracle_scores(k_cross: &Matrix, labels: &[u8], sol: &QpSolution) -> Vec<f64> {
    (0..k_cross.rows())
        .map(|r| {
            (0..labels.len())
                .map(|i| sol.alpha[i] * if labels[i] == 1 { 1.0 } else { -1.0 } * k_cross[(r, i)])
                .sum::<f64>()
                + sol.bias
        })
        .collect()
}

/// Random SVC instance: a Gram matrix of random points plus a small ridge,
/// with a held-out cross block.
pub struct SvcInstance {
    pub k_train: Matrix,
    pub k_test: Matrix,
    pub labels: Vec<u8>,
}

pub fn svc_instance(n_train: usize, n_test: usize, seed: u64) -> SvcInstance {
    let mut rng = Rng::new(seed);
    let dim = 2 + rng.below(5);
    let n = n_train + n_test;
    let x = Matrix::from_fn(n, dim, |_, _| rng.normal());
    let mut labels: Vec<u8> = (0..n_train)
        .map(|i| (x[(i, 0)] + 0.7 * rng.normal() > 0.3) as u8)
        .collect();
    labels[0] = 0;
    labels[1] = 1;
    let rbf = seed.is_multiple_of(2);
    let kf = |i: usize, j: usize| {
        let (a, b) = (x.row(i), x.row(j));
        if rbf {
            let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum();
            (-0.5 * d2).exp()
        } else {
            a.iter().zip(b).map(|(u, v)| u * v).sum()
        }
    };
    let k_train = Matrix::from_fn(n_train, n_train, |i, j| {
        kf(i, j) + if i == j { 0.05 } else { 0.0 }
    });
    let k_test = Matrix::from_fn(n_test, n_train, |i, j| kf(n_train + i, j));
    SvcInstance {
        k_train,
        k_test,
        labels,
    }
}

/// AUC by counting every (positive, negative) pair.
pub fn auc_pairs(y: &[u8], s: &[f64]) -> Option<f64> {
    let mut num = 0.0;
    let mut pairs = 0usize;
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i] == 1 && y[j] == 0 {
                pairs += 1;
                if s[i] > s[j] {
                    num += 1.0;
                } else if s[i] == s[j] {
                    num += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| num / pairs as f64)
}

pub fn f1(y: &[u8], p: &[u8]) -> f64 {
    let tp = y.iter().zip(p).filter(|(a, b)| **a == 1 && **b == 1).count();
    let fp = y.iter().zip(p).filter(|(a, b)| **a == 0 && **b == 1).count();
    let fneg = y.iter().zip(p).filter(|(a, b)| **a == 1 && **b == 0).count();
    if 2 * tp + fp + fneg == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
    }
}

/// Sequential re-implementation of the paired bootstrap resampling loop.
pub fn bootstrap_replay(y: &[u8], a: &[u8], b: &[u8], resamples: usize, seed: u64) -> Vec<f64> {
    let n = y.len();
    (0..resamples)
        .map(|r| {
            let mut rng = Rng::substream(seed, r as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.below(n)).collect();
            let ys: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
            let as_: Vec<u8> = idx.iter().map(|&i| a[i]).collect();
            let bs: Vec<u8> = idx.iter().map(|&i| b[i]).collect();
            f1(&ys, &as_) - f1(&ys, &bs)
        })
        .collect()
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (s.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}
