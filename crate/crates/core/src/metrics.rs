//! Confusion-matrix metrics, rank AUC and the paired bootstrap.
//!
//! Class 1 is the positive (minority) class throughout.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const DEFAULT_BOOTSTRAP_SEED: u64 = 42;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_predictions(y_true: &[u8], y_pred: &[u8]) -> Self {
        let mut c = Confusion::default();
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t == 1, p == 1) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// `2tp / (2tp + fp + fn)`, zero when the denominator is.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub accuracy: f64,
    pub f1_minority: f64,
    /// 0.5 when only one class is present (`auc_defined` false).
    pub auc: f64,
    pub auc_defined: bool,
}

impl MetricsReport {
    pub fn confusion(&self) -> Confusion {
        Confusion {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            tn: self.tn,
        }
    }
}

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{a} labels but {b} {what}")));
    }
    Ok(())
}

pub fn evaluate(y_true: &[u8], y_pred: &[u8], scores: &[f64]) -> Result<MetricsReport> {
    check_len(y_true.len(), y_pred.len(), "predictions")?;
    check_len(y_true.len(), scores.len(), "scores")?;
    if y_true.is_empty() {
        return Err(Error::InvalidInput("no samples to evaluate".into()));
    }
    let c = Confusion::from_predictions(y_true, y_pred);
    let (auc, auc_defined) = match auc(y_true, scores)? {
        Some(a) => (a, true),
        None => (0.5, false),
    };
    Ok(MetricsReport {
        tp: c.tp,
        fp: c.fp,
        fn_: c.fn_,
        tn: c.tn,
        accuracy: c.accuracy(),
        f1_minority: c.f1(),
        auc,
        auc_defined,
    })
}

/// Mann–Whitney AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counted half. `None` if a class is absent.
pub fn auc(y_true: &[u8], scores: &[f64]) -> Result<Option<f64>> {
    check_len(y_true.len(), scores.len(), "scores")?;
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::InvalidInput(format!("score {i} is NaN")));
    }
    let n_pos = y_true.iter().filter(|&&y| y == 1).count() as u64;
    let n_neg = y_true.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the U statistic, kept integral
    let mut u2: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let group = &order[start..end];
        let pos = group.iter().filter(|&&i| y_true[i] == 1).count() as u64;
        let neg = group.len() as u64 - pos;
        u2 += pos * (2 * neg_below + neg);
        neg_below += neg;
        start = end;
    }
    Ok(Some(u2 as f64 / (2 * n_pos * n_neg) as f64))
}

pub fn f1_score(y_true: &[u8], y_pred: &[u8]) -> f64 {
    Confusion::from_predictions(y_true, y_pred).f1()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// `F1(a) − F1(b)` on the full set.
    pub delta_observed: f64,
    pub delta_mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// One-sided, for `F1(a) > F1(b)`.
    pub p_value: f64,
    pub p_value_two_sided: f64,
    pub resamples: usize,
    pub seed: u64,
}

/// Paired bootstrap of the F1 difference between two prediction vectors.
///
/// Resample `b` draws its `n` indices from `Rng::substream(seed, b)`, so the
/// result does not depend on the number of worker threads.
pub fn paired_bootstrap(
    y_true: &[u8],
    pred_a: &[u8],
    pred_b: &[u8],
    resamples: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    let deltas = bootstrap_deltas(y_true, pred_a, pred_b, resamples, seed)?;
    let delta_observed = f1_score(y_true, pred_a) - f1_score(y_true, pred_b);
    Ok(summarize_deltas(delta_observed, &deltas, seed))
}

/// Per-resample `F1(a) − F1(b)`, in resample order.
pub fn bootstrap_deltas(
    y_true: &[u8],
    pred_a: &[u8],
    pred_b: &[u8],
    resamples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_len(y_true.len(), pred_a.len(), "predictions (a)")?;
    check_len(y_true.len(), pred_b.len(), "predictions (b)")?;
    let n = y_true.len();
    if n == 0 {
        return Err(Error::InvalidInput("no samples to resample".into()));
    }
    if resamples == 0 {
        return Err(Error::InvalidInput("resamples must be at least 1".into()));
    }
    Ok((0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = Rng::substream(seed, b as u64);
            let mut ca = Confusion::default();
            let mut cb = Confusion::default();
            for _ in 0..n {
                let i = rng.below(n);
                tally(&mut ca, y_true[i], pred_a[i]);
                tally(&mut cb, y_true[i], pred_b[i]);
            }
            ca.f1() - cb.f1()
        })
        .collect())
}

fn tally(c: &mut Confusion, t: u8, p: u8) {
    match (t == 1, p == 1) {
        (true, true) => c.tp += 1,
        (false, true) => c.fp += 1,
        (true, false) => c.fn_ += 1,
        (false, false) => c.tn += 1,
    }
}

/// Percentile CI and p-values from resampled deltas.
pub fn summarize_deltas(delta_observed: f64, deltas: &[f64], seed: u64) -> BootstrapResult {
    let b = deltas.len();
    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let at_or_below = deltas.iter().filter(|&&d| d <= 0.0).count();
    let at_or_above = deltas.iter().filter(|&&d| d >= 0.0).count();
    let p_one = (1 + at_or_below) as f64 / (b + 1) as f64;
    let p_other = (1 + at_or_above) as f64 / (b + 1) as f64;
    BootstrapResult {
        delta_observed,
        delta_mean: deltas.iter().sum::<f64>() / b as f64,
        ci_lo: percentile(&sorted, 2.5),
        ci_hi: percentile(&sorted, 97.5),
        p_value: p_one,
        p_value_two_sided: (2.0 * p_one.min(p_other)).min(1.0),
        resamples: b,
        seed,
    }
}

/// Linear-interpolation percentile of sorted data, position `p/100 · (n−1)`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
