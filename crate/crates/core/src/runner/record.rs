use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernels::Normalization;
use crate::metrics::{mean_std, paired_bootstrap, BootstrapResult, MetricsReport};
use crate::statevec::Dof;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Qsvm,
    Linear,
    Rbf,
    RbfRankMatched,
    Projected,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Qsvm => "qsvm",
            Method::Linear => "linear",
            Method::Rbf => "rbf",
            Method::RbfRankMatched => "rbf_rank_matched",
            Method::Projected => "projected",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Test-set outputs kept in memory for bootstrap comparisons.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TestOutputs {
    pub labels: Vec<u8>,
    pub predictions: Vec<u8>,
    pub scores: Vec<f64>,
}

/// One evaluated (method, hyperparameters, seed, q) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub model_tag: String,
    pub seed_tag: String,
    pub q: usize,
    pub method: Method,
    /// Circuit settings; `None` for classical methods.
    pub reps: Option<usize>,
    pub dof: Option<Dof>,
    pub c: f64,
    pub gamma: Option<f64>,
    pub normalization: Normalization,
    /// `None` when the cell failed; see `status`.
    pub metrics: Option<MetricsReport>,
    pub eff_rank: Option<f64>,
    pub n_positive: Option<usize>,
    pub lambda_max: Option<f64>,
    pub target_rank: Option<f64>,
    pub collapsed: Option<bool>,
    /// Spectrum dump relative to the output directory.
    pub spectrum_ref: Option<String>,
    pub status: String,
    /// Seconds; reported separately from `results.csv`.
    pub wallclock: f64,
    #[serde(skip)]
    pub test: TestOutputs,
}

impl RunRecord {
    pub fn f1(&self) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.f1_minority)
    }

    pub fn is_ok(&self) -> bool {
        self.metrics.is_some()
    }

    /// Identifies the configuration a record aggregates under (everything
    /// except the seed).
    pub fn group_key(&self) -> GroupKey {
        GroupKey {
            model_tag: self.model_tag.clone(),
            q: self.q,
            method: self.method,
            reps: self.reps,
            dof: self.dof.map(u8::from),
            normalization: self.normalization,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub model_tag: String,
    pub q: usize,
    pub method: Method,
    pub reps: Option<usize>,
    pub dof: Option<u8>,
    pub normalization: Normalization,
}

/// Column order of `results.csv`.
pub const RESULT_COLUMNS: [&str; 25] = [
    "experiment",
    "model",
    "seed",
    "q",
    "method",
    "reps",
    "dof",
    "c",
    "gamma",
    "normalization",
    "tp",
    "fp",
    "fn",
    "tn",
    "accuracy",
    "f1",
    "auc",
    "auc_defined",
    "eff_rank",
    "n_positive",
    "lambda_max",
    "target_rank",
    "collapsed",
    "spectrum",
    "status",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes records in the given order, one per row. Floats use the shortest
/// round-trip representation so identical runs give identical bytes.
pub fn write_results_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULT_COLUMNS)?;
    for r in records {
        let m = r.metrics.as_ref();
        w.write_record([
            r.experiment.clone(),
            r.model_tag.clone(),
            r.seed_tag.clone(),
            r.q.to_string(),
            r.method.to_string(),
            opt(r.reps),
            opt(r.dof.map(u8::from)),
            r.c.to_string(),
            opt(r.gamma),
            r.normalization.to_string(),
            opt(m.map(|m| m.tp)),
            opt(m.map(|m| m.fp)),
            opt(m.map(|m| m.fn_)),
            opt(m.map(|m| m.tn)),
            opt(m.map(|m| m.accuracy)),
            opt(m.map(|m| m.f1_minority)),
            opt(m.map(|m| m.auc)),
            opt(m.map(|m| m.auc_defined)),
            opt(r.eff_rank),
            opt(r.n_positive),
            opt(r.lambda_max),
            opt(r.target_rank),
            opt(r.collapsed),
            r.spectrum_ref.clone().unwrap_or_default(),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `experiment,model,seed,q,method,wallclock_s` for every record.
pub fn write_timings_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["experiment", "model", "seed", "q", "method", "wallclock_s"])?;
    for r in records {
        w.write_record([
            r.experiment.clone(),
            r.model_tag.clone(),
            r.seed_tag.clone(),
            r.q.to_string(),
            r.method.to_string(),
            format!("{:.3}", r.wallclock),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "F1 WIN")]
    Win,
    #[serde(rename = "F1 LOSS")]
    Loss,
    #[serde(rename = "TIE")]
    Tie,
}

impl Verdict {
    /// Win only on a strictly larger mean F1.
    pub fn from_means(a: f64, b: f64) -> Self {
        if a > b {
            Verdict::Win
        } else if a < b {
            Verdict::Loss
        } else {
            Verdict::Tie
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Win => "F1 WIN",
            Verdict::Loss => "F1 LOSS",
            Verdict::Tie => "TIE",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedBootstrap {
    pub seed_tag: String,
    pub result: BootstrapResult,
}

/// Method A against method B at one (model, q), aggregated over seeds. The
/// one-sided bootstrap p-value tests `F1(A) > F1(B)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model_tag: String,
    pub q: usize,
    pub method_a: Method,
    pub method_b: Method,
    pub n_seeds: usize,
    pub f1_a: MeanStd,
    pub f1_b: MeanStd,
    pub accuracy_a: MeanStd,
    pub accuracy_b: MeanStd,
    pub auc_a: MeanStd,
    pub auc_b: MeanStd,
    /// Mean F1 of A minus mean F1 of B.
    pub delta_f1: f64,
    pub verdict: Verdict,
    /// Bootstrap over the concatenated test predictions of every seed.
    pub pooled_bootstrap: BootstrapResult,
    pub per_seed: Vec<SeedBootstrap>,
}

/// Pairs A and B records sharing (model, seed, q) and summarises them.
/// Records that failed are left out.
pub fn compare(
    a_records: &[&RunRecord],
    b_records: &[&RunRecord],
    resamples: usize,
    seed: u64,
) -> Result<Option<Comparison>> {
    let mut pairs = Vec::new();
    for ar in a_records.iter().filter(|r| r.is_ok()) {
        if let Some(br) = b_records
            .iter()
            .find(|c| c.is_ok() && c.seed_tag == ar.seed_tag && c.q == ar.q && c.model_tag == ar.model_tag)
        {
            pairs.push((*ar, *br));
        }
    }
    let Some(&(first_a, first_b)) = pairs.first() else {
        return Ok(None);
    };
    let pick = |f: fn(&MetricsReport) -> f64, r: &RunRecord| f(r.metrics.as_ref().unwrap());
    let col = |f: fn(&MetricsReport) -> f64, side_a: bool| -> Vec<f64> {
        pairs
            .iter()
            .map(|(q, c)| pick(f, if side_a { q } else { c }))
            .collect()
    };
    let f1a = MeanStd::of(&col(|m| m.f1_minority, true));
    let f1b = MeanStd::of(&col(|m| m.f1_minority, false));

    let mut per_seed = Vec::with_capacity(pairs.len());
    let (mut y, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
    for (q, c) in &pairs {
        per_seed.push(SeedBootstrap {
            seed_tag: q.seed_tag.clone(),
            result: paired_bootstrap(
                &q.test.labels,
                &q.test.predictions,
                &c.test.predictions,
                resamples,
                seed,
            )?,
        });
        y.extend_from_slice(&q.test.labels);
        a.extend_from_slice(&q.test.predictions);
        b.extend_from_slice(&c.test.predictions);
    }
    Ok(Some(Comparison {
        model_tag: first_a.model_tag.clone(),
        q: first_a.q,
        method_a: first_a.method,
        method_b: first_b.method,
        n_seeds: pairs.len(),
        delta_f1: f1a.mean - f1b.mean,
        verdict: Verdict::from_means(f1a.mean, f1b.mean),
        f1_a: f1a,
        f1_b: f1b,
        accuracy_a: MeanStd::of(&col(|m| m.accuracy, true)),
        accuracy_b: MeanStd::of(&col(|m| m.accuracy, false)),
        auc_a: MeanStd::of(&col(|m| m.auc, true)),
        auc_b: MeanStd::of(&col(|m| m.auc, false)),
        pooled_bootstrap: paired_bootstrap(&y, &a, &b, resamples, seed)?,
        per_seed,
    }))
}

/// Mean ± std of the headline metrics for one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    #[serde(flatten)]
    pub key: GroupKey,
    pub n_seeds: usize,
    pub n_failed: usize,
    pub f1: MeanStd,
    pub accuracy: MeanStd,
    pub auc: MeanStd,
    pub eff_rank: Option<MeanStd>,
    /// Share of seeds whose F1 fell below the collapse threshold.
    pub collapse_rate: f64,
}

pub fn summarize_groups(records: &[RunRecord], collapse_f1: f64) -> Vec<GroupSummary> {
    let mut keys: Vec<GroupKey> = records.iter().map(RunRecord::group_key).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|key| {
            let members: Vec<&RunRecord> = records.iter().filter(|r| r.group_key() == key).collect();
            let ok: Vec<&MetricsReport> = members.iter().filter_map(|r| r.metrics.as_ref()).collect();
            let f1: Vec<f64> = ok.iter().map(|m| m.f1_minority).collect();
            let ranks: Vec<f64> = members.iter().filter_map(|r| r.eff_rank).collect();
            GroupSummary {
                n_seeds: ok.len(),
                n_failed: members.len() - ok.len(),
                accuracy: MeanStd::of(&ok.iter().map(|m| m.accuracy).collect::<Vec<_>>()),
                auc: MeanStd::of(&ok.iter().map(|m| m.auc).collect::<Vec<_>>()),
                eff_rank: (!ranks.is_empty()).then(|| MeanStd::of(&ranks)),
                collapse_rate: if f1.is_empty() {
                    0.0
                } else {
                    f1.iter().filter(|&&v| v < collapse_f1).count() as f64 / f1.len() as f64
                },
                f1: MeanStd::of(&f1),
                key,
            }
        })
        .collect()
}
