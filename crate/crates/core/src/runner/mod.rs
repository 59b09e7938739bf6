//! Experiment orchestration: data preparation, per-cell evaluation of every
//! method, aggregation and report files.
//!
//! A cell is one (embedding file, qubit count). Cells run in parallel; the
//! records they produce are emitted in config order, so outputs do not depend
//! on scheduling.

mod cache;
mod config;
mod record;
mod synth;

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{
    linear_kernel, normalize, normalize_test, pauli_z_features, projected_kernel, rbf_kernel, scale_gamma,
    self_kernel, KernelKind, KernelMatrix, KernelOptions, Normalization,
};
use crate::metrics::{evaluate, MetricsReport};
use crate::numerics::{Matrix, Rng};
use crate::pipeline::{split, Dataset, PcaBasis, SplitIndices};
use crate::spectra::{rank_match_gamma, spectrum, variance_stats, SpectrumReport, VarianceReport};
use crate::statevec::CircuitConfig;
use crate::svc::{decision_scores, labels_from_scores, train, SvcParams};

pub use cache::{kernel_key, KernelCache};
pub use config::{BootstrapConfig, EmbeddingEntry, ExperimentConfig, GridNeed, Variant};
pub use record::{
    compare, summarize_groups, write_results_csv, write_timings_csv, Comparison, GroupKey, GroupSummary,
    MeanStd, Method, RunRecord, SeedBootstrap, TestOutputs, Verdict, RESULT_COLUMNS,
};
pub use synth::{ring_dataset, synthetic_dataset, SynthSpec};

/// Seed of the stratified subsample behind the variance statistics.
pub const VARIANCE_SEED: u64 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Tier1,
    Tier2,
    Sweep,
    RankMatched,
    Projected,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Tier1 => "tier1",
            Experiment::Tier2 => "tier2",
            Experiment::Sweep => "sweep",
            Experiment::RankMatched => "rankmatch",
            Experiment::Projected => "projected",
        }
    }

    fn grid_need(&self) -> GridNeed {
        match self {
            Experiment::Tier2 => GridNeed::C,
            Experiment::Projected => GridNeed::GammaAndC,
            _ => GridNeed::None,
        }
    }

    /// Method pairs compared in the summary, as (A, B) with A tested as better.
    fn comparisons(&self) -> &'static [(Method, Method)] {
        match self {
            Experiment::Tier1 => &[(Method::Qsvm, Method::Linear)],
            Experiment::Tier2 => &[(Method::Qsvm, Method::Rbf)],
            Experiment::RankMatched => &[(Method::Qsvm, Method::RbfRankMatched)],
            Experiment::Projected => &[(Method::Projected, Method::Qsvm)],
            Experiment::Sweep => &[],
        }
    }
}

/// Everything one experiment produced.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentOutput {
    pub experiment: String,
    pub records: Vec<RunRecord>,
    pub groups: Vec<GroupSummary>,
    pub comparisons: Vec<Comparison>,
}

/// An embedding file loaded, split and with its PCA basis fitted.
pub struct Prepared {
    pub entry: EmbeddingEntry,
    pub dataset: Dataset,
    pub split: SplitIndices,
    pub basis: PcaBasis,
}

/// Reduced features and labels for one (embedding file, q).
pub struct Cell<'a> {
    pub prep: &'a Prepared,
    pub q: usize,
    pub x_train: Matrix,
    pub x_val: Matrix,
    pub x_test: Matrix,
    pub y_train: Vec<u8>,
    pub y_val: Vec<u8>,
    pub y_test: Vec<u8>,
}

/// Circuit and normalisation of one QSVM evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantumSetting {
    pub circuit: CircuitConfig,
    pub normalization: Normalization,
}

pub struct Runner {
    cfg: ExperimentConfig,
    cache: KernelCache,
    /// `None` keeps everything in memory.
    out_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct SpectrumDump<'a> {
    spectrum: &'a SpectrumReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    variance: Option<&'a VarianceReport>,
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: &'a str,
    config: &'a ExperimentConfig,
    groups: &'a [GroupSummary],
    comparisons: &'a [Comparison],
}

impl Runner {
    /// Runner that writes reports and caches kernels under the config's
    /// directories.
    pub fn new(cfg: ExperimentConfig) -> Self {
        let cache = KernelCache::new(Some(cfg.kernel_cache_dir()));
        let out_dir = Some(cfg.output_dir.clone());
        Self { cfg, cache, out_dir }
    }

    /// Runner with no file output.
    pub fn in_memory(cfg: ExperimentConfig) -> Self {
        Self {
            cfg,
            cache: KernelCache::new(None),
            out_dir: None,
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn cache(&self) -> &KernelCache {
        &self.cache
    }

    pub fn run_tier1(&self) -> Result<ExperimentOutput> {
        self.run(Experiment::Tier1)
    }

    pub fn run_tier2(&self) -> Result<ExperimentOutput> {
        self.run(Experiment::Tier2)
    }

    pub fn run_sweep(&self) -> Result<ExperimentOutput> {
        self.run(Experiment::Sweep)
    }

    pub fn run_rank_matched(&self) -> Result<ExperimentOutput> {
        self.run(Experiment::RankMatched)
    }

    pub fn run_projected(&self) -> Result<ExperimentOutput> {
        self.run(Experiment::Projected)
    }

    pub fn run(&self, exp: Experiment) -> Result<ExperimentOutput> {
        self.cfg.validate(exp.grid_need())?;
        let preps = self.prepare()?;
        let cells: Vec<(usize, usize)> = (0..preps.len())
            .flat_map(|p| self.cfg.qubit_list.iter().map(move |&q| (p, q)))
            .collect();
        let opts = KernelOptions {
            memory_cap_bytes: self
                .cfg
                .memory_cap_bytes
                .map(|cap| cap / cells.len().min(rayon::current_num_threads()).max(1)),
        };
        let per_cell: Vec<Vec<RunRecord>> = cells
            .par_iter()
            .map(|&(p, q)| {
                let cell = self.cell(&preps[p], q)?;
                self.run_cell(exp, &cell, &opts)
            })
            .collect::<Result<_>>()?;
        let mut records: Vec<RunRecord> = per_cell.into_iter().flatten().collect();
        if exp == Experiment::Sweep {
            let model_order: Vec<&str> = {
                let mut seen: Vec<&str> = Vec::new();
                for e in &self.cfg.embeddings {
                    if !seen.contains(&e.model.as_str()) {
                        seen.push(&e.model);
                    }
                }
                seen
            };
            let rank = |m: &str| model_order.iter().position(|x| *x == m).unwrap_or(usize::MAX);
            records.sort_by_key(|r| (rank(&r.model_tag), r.q));
        }
        log::info!(
            "{}: {} records, kernel cache {} hits / {} misses",
            exp.as_str(),
            records.len(),
            self.cache.hits(),
            self.cache.misses()
        );

        let groups = summarize_groups(&records, self.cfg.collapse_f1);
        let comparisons = self.comparisons(exp, &records)?;
        let out = ExperimentOutput {
            experiment: exp.as_str().to_string(),
            records,
            groups,
            comparisons,
        };
        if let Some(dir) = &self.out_dir {
            self.write_reports(dir, &out)?;
        }
        Ok(out)
    }

    /// Loads, splits and fits PCA for every embedding file.
    pub fn prepare(&self) -> Result<Vec<Prepared>> {
        self.cfg
            .embeddings
            .par_iter()
            .map(|entry| {
                let dataset = match &entry.manifest {
                    Some(m) => Dataset::from_csv_with_manifest(&entry.path, m)?.0,
                    None => Dataset::from_csv(&entry.path)?,
                };
                Self::prepare_dataset(entry.clone(), dataset, self.cfg.split_seed)
            })
            .collect()
    }

    pub fn prepare_dataset(entry: EmbeddingEntry, dataset: Dataset, split_seed: u64) -> Result<Prepared> {
        let split = split(&dataset, split_seed)?;
        let basis = PcaBasis::fit(&dataset.features, &split.train)?;
        Ok(Prepared {
            entry,
            dataset,
            split,
            basis,
        })
    }

    pub fn cell<'a>(&self, prep: &'a Prepared, q: usize) -> Result<Cell<'a>> {
        let pipe = prep.basis.truncate(q)?;
        let part = |idx: &[usize]| pipe.transform(&prep.dataset.features.select_rows(idx));
        Ok(Cell {
            prep,
            q,
            x_train: part(&prep.split.train)?,
            x_val: part(&prep.split.val)?,
            x_test: part(&prep.split.test)?,
            y_train: prep.dataset.labels_at(&prep.split.train),
            y_val: prep.dataset.labels_at(&prep.split.val),
            y_test: prep.dataset.labels_at(&prep.split.test),
        })
    }

    fn base_setting(&self, q: usize) -> Result<QuantumSetting> {
        Ok(QuantumSetting {
            circuit: CircuitConfig::new(q, self.cfg.reps, self.cfg.dof)?,
            normalization: self.cfg.normalization,
        })
    }

    fn run_cell(&self, exp: Experiment, cell: &Cell, opts: &KernelOptions) -> Result<Vec<RunRecord>> {
        let base = self.base_setting(cell.q)?;
        let c = self.cfg.c;
        let name = exp.as_str();
        match exp {
            Experiment::Tier1 => Ok(vec![
                self.eval_qsvm(name, cell, base, c, opts)?,
                self.eval_linear(name, cell, c)?,
            ]),
            Experiment::Tier2 => Ok(vec![
                self.eval_qsvm(name, cell, base, c, opts)?,
                self.eval_rbf_tuned(name, cell)?,
            ]),
            Experiment::Sweep => {
                let mut out = vec![self.eval_qsvm(name, cell, base, c, opts)?];
                for v in &self.cfg.variants {
                    let setting = QuantumSetting {
                        circuit: CircuitConfig::new(
                            cell.q,
                            v.reps.unwrap_or(self.cfg.reps),
                            v.dof.unwrap_or(self.cfg.dof),
                        )?,
                        normalization: v.normalization.unwrap_or(self.cfg.normalization),
                    };
                    out.push(self.eval_qsvm(name, cell, setting, c, opts)?);
                }
                Ok(out)
            }
            Experiment::RankMatched => {
                let quantum = self.eval_qsvm(name, cell, base, c, opts)?;
                let target = match self.cfg.rank_targets.get(&cell.q) {
                    Some(&t) => t,
                    None => quantum
                        .eff_rank
                        .ok_or_else(|| Error::Degenerate("quantum kernel spectrum unavailable".into()))?,
                };
                let matched = self.eval_rank_matched(name, cell, target)?;
                Ok(vec![quantum, matched])
            }
            Experiment::Projected => Ok(vec![
                self.eval_qsvm(name, cell, base, c, opts)?,
                self.eval_projected(name, cell, base.circuit)?,
            ]),
        }
    }

    fn record(&self, experiment: &str, cell: &Cell, method: Method) -> RunRecord {
        RunRecord {
            experiment: experiment.to_string(),
            model_tag: cell.prep.entry.model.clone(),
            seed_tag: cell.prep.entry.seed_tag.clone(),
            q: cell.q,
            method,
            reps: None,
            dof: None,
            c: self.cfg.c,
            gamma: None,
            normalization: Normalization::None,
            metrics: None,
            eff_rank: None,
            n_positive: None,
            lambda_max: None,
            target_rank: None,
            collapsed: None,
            spectrum_ref: None,
            status: "ok".to_string(),
            wallclock: 0.0,
            test: TestOutputs::default(),
        }
    }

    /// Trains on `k_train`, scores `k_test` and fills metrics into `rec`.
    fn fit_and_score(
        &self,
        rec: &mut RunRecord,
        k_train: &Matrix,
        k_test: &Matrix,
        cell: &Cell,
        c: f64,
    ) -> Result<()> {
        let (metrics, test) =
            fit_evaluate(k_train, &cell.y_train, k_test, &cell.y_test, c, self.cfg.svm_tol)?;
        rec.c = c;
        rec.collapsed = Some(metrics.f1_minority < self.cfg.collapse_f1);
        rec.metrics = Some(metrics);
        rec.test = test;
        Ok(())
    }

    fn attach_spectrum(
        &self,
        rec: &mut RunRecord,
        k_train: &Matrix,
        labels: Option<&[u8]>,
        tag: &str,
    ) -> Result<()> {
        let spec = spectrum(k_train)?;
        rec.eff_rank = Some(spec.eff_rank);
        rec.n_positive = Some(spec.n_positive);
        rec.lambda_max = Some(spec.lambda_max);
        if let Some(dir) = &self.out_dir {
            let variance = match labels {
                Some(y) => Some(variance_stats(
                    k_train,
                    y,
                    self.cfg.variance_subsample.min(y.len()),
                    &mut Rng::new(VARIANCE_SEED),
                )?),
                None => None,
            };
            let name = format!(
                "{}_{}_{}_q{}_{}.json",
                rec.experiment,
                sanitize(&rec.model_tag),
                sanitize(&rec.seed_tag),
                rec.q,
                tag
            );
            let rel = format!("spectra/{name}");
            std::fs::create_dir_all(dir.join("spectra"))?;
            let dump = SpectrumDump {
                spectrum: &spec,
                variance: variance.as_ref(),
            };
            serde_json::to_writer_pretty(File::create(dir.join(&rel))?, &dump)?;
            rec.spectrum_ref = Some(rel);
        }
        Ok(())
    }

    /// Fidelity-kernel SVC at one circuit/normalisation setting.
    pub fn eval_qsvm(
        &self,
        experiment: &str,
        cell: &Cell,
        setting: QuantumSetting,
        c: f64,
        opts: &KernelOptions,
    ) -> Result<RunRecord> {
        let start = Instant::now();
        let mut rec = self.record(experiment, cell, Method::Qsvm);
        rec.reps = Some(setting.circuit.reps);
        rec.dof = Some(setting.circuit.dof);
        rec.normalization = setting.normalization;

        let cache = &self.cache;
        let raw_train = cache.quantum(&cell.x_train, &cell.x_train, &setting.circuit, opts)?;
        let raw_test = cache.quantum(&cell.x_test, &cell.x_train, &setting.circuit, opts)?;
        let (k_train, stats) = normalize(
            &KernelMatrix::raw((*raw_train).clone(), KernelKind::QuantumFidelity),
            setting.normalization,
        )?;
        let test_self = self_kernel(KernelKind::QuantumFidelity, &cell.x_test);
        let k_test = normalize_test(
            &KernelMatrix::raw((*raw_test).clone(), KernelKind::QuantumFidelity),
            &stats,
            Some(&test_self),
        )?;
        self.fit_and_score(&mut rec, &k_train.values, &k_test.values, cell, c)?;
        let tag = format!(
            "qsvm_r{}_d{}_{}",
            setting.circuit.reps,
            u8::from(setting.circuit.dof),
            setting.normalization
        );
        self.attach_spectrum(&mut rec, &k_train.values, Some(&cell.y_train), &tag)?;
        rec.wallclock = start.elapsed().as_secs_f64();
        Ok(rec)
    }

    /// Linear-kernel SVC on the same reduced features.
    pub fn eval_linear(&self, experiment: &str, cell: &Cell, c: f64) -> Result<RunRecord> {
        let start = Instant::now();
        let mut rec = self.record(experiment, cell, Method::Linear);
        let k_train = linear_kernel(&cell.x_train, &cell.x_train)?.values;
        let k_test = linear_kernel(&cell.x_test, &cell.x_train)?.values;
        self.fit_and_score(&mut rec, &k_train, &k_test, cell, c)?;
        self.attach_spectrum(&mut rec, &k_train, Some(&cell.y_train), "linear")?;
        rec.wallclock = start.elapsed().as_secs_f64();
        Ok(rec)
    }

    /// RBF SVC at the scale bandwidth with C chosen by validation F1.
    pub fn eval_rbf_tuned(&self, experiment: &str, cell: &Cell) -> Result<RunRecord> {
        let start = Instant::now();
        let mut rec = self.record(experiment, cell, Method::Rbf);
        let gamma = scale_gamma(&cell.x_train)?;
        let k_train = rbf_kernel(&cell.x_train, &cell.x_train, gamma)?.values;
        let k_val = rbf_kernel(&cell.x_val, &cell.x_train, gamma)?.values;
        let c = select_c(
            &k_train,
            &cell.y_train,
            &k_val,
            &cell.y_val,
            &self.cfg.c_grid,
            self.cfg.svm_tol,
        )?;
        let k_test = rbf_kernel(&cell.x_test, &cell.x_train, gamma)?.values;
        rec.gamma = Some(gamma);
        self.fit_and_score(&mut rec, &k_train, &k_test, cell, c)?;
        self.attach_spectrum(&mut rec, &k_train, Some(&cell.y_train), "rbf")?;
        rec.wallclock = start.elapsed().as_secs_f64();
        Ok(rec)
    }

    /// RBF SVC whose bandwidth matches a target effective rank. An
    /// unreachable target is reported in the record rather than raised.
    pub fn eval_rank_matched(&self, experiment: &str, cell: &Cell, target: f64) -> Result<RunRecord> {
        let start = Instant::now();
        let mut rec = self.record(experiment, cell, Method::RbfRankMatched);
        rec.target_rank = Some(target);
        let found = match rank_match_gamma(&cell.x_train, target, self.cfg.rank_tol_rel) {
            Ok(m) => m,
            Err(e @ (Error::UnreachableTarget { .. } | Error::InvalidInput(_))) => {
                rec.status = format!("unreachable: {e}");
                rec.wallclock = start.elapsed().as_secs_f64();
                return Ok(rec);
            }
            Err(e) => return Err(e),
        };
        let k_train = rbf_kernel(&cell.x_train, &cell.x_train, found.gamma)?.values;
        let k_test = rbf_kernel(&cell.x_test, &cell.x_train, found.gamma)?.values;
        rec.gamma = Some(found.gamma);
        self.fit_and_score(&mut rec, &k_train, &k_test, cell, self.cfg.c)?;
        self.attach_spectrum(&mut rec, &k_train, Some(&cell.y_train), "rbf_rank_matched")?;
        rec.wallclock = start.elapsed().as_secs_f64();
        Ok(rec)
    }

    /// Projected kernel with (γ, C) chosen by validation accuracy.
    pub fn eval_projected(&self, experiment: &str, cell: &Cell, circuit: CircuitConfig) -> Result<RunRecord> {
        let start = Instant::now();
        let mut rec = self.record(experiment, cell, Method::Projected);
        rec.reps = Some(circuit.reps);
        rec.dof = Some(circuit.dof);
        let z_train = pauli_z_features(&cell.x_train, &circuit)?;
        let z_val = pauli_z_features(&cell.x_val, &circuit)?;
        let z_test = pauli_z_features(&cell.x_test, &circuit)?;
        let (gamma, c) = select_projected(
            &z_train,
            &cell.y_train,
            &z_val,
            &cell.y_val,
            &self.cfg.gamma_grid,
            &self.cfg.c_grid,
            self.cfg.svm_tol,
        )?;
        let k_train = projected_kernel(&z_train, &z_train, gamma)?.values;
        let k_test = projected_kernel(&z_test, &z_train, gamma)?.values;
        rec.gamma = Some(gamma);
        self.fit_and_score(&mut rec, &k_train, &k_test, cell, c)?;
        self.attach_spectrum(&mut rec, &k_train, Some(&cell.y_train), "projected")?;
        rec.wallclock = start.elapsed().as_secs_f64();
        Ok(rec)
    }

    fn comparisons(&self, exp: Experiment, records: &[RunRecord]) -> Result<Vec<Comparison>> {
        let mut cells: BTreeMap<(usize, usize), ()> = BTreeMap::new();
        let model_index = |m: &str| {
            self.cfg
                .embeddings
                .iter()
                .position(|e| e.model == m)
                .unwrap_or(usize::MAX)
        };
        for r in records {
            cells.insert((model_index(&r.model_tag), r.q), ());
        }
        let mut out = Vec::new();
        for &(a, b) in exp.comparisons() {
            for &(m, q) in cells.keys() {
                let pick = |method: Method| -> Vec<&RunRecord> {
                    records
                        .iter()
                        .filter(|r| r.method == method && r.q == q && model_index(&r.model_tag) == m)
                        .collect()
                };
                if let Some(c) = compare(
                    &pick(a),
                    &pick(b),
                    self.cfg.bootstrap.resamples,
                    self.cfg.bootstrap.seed,
                )? {
                    out.push(c);
                }
            }
        }
        Ok(out)
    }

    fn write_reports(&self, dir: &Path, out: &ExperimentOutput) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_results_csv(&dir.join("results.csv"), &out.records)?;
        write_timings_csv(&dir.join("timings.csv"), &out.records)?;
        let summary = Summary {
            experiment: &out.experiment,
            config: &self.cfg,
            groups: &out.groups,
            comparisons: &out.comparisons,
        };
        serde_json::to_writer_pretty(File::create(dir.join("summary.json"))?, &summary)?;
        Ok(())
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Trains an SVC on a precomputed kernel and evaluates it on a test block.
pub fn fit_evaluate(
    k_train: &Matrix,
    y_train: &[u8],
    k_test: &Matrix,
    y_test: &[u8],
    c: f64,
    tol: f64,
) -> Result<(MetricsReport, TestOutputs)> {
    let params = SvcParams {
        tol,
        ..SvcParams::with_c(c)
    };
    let model = train(k_train, y_train, &params)?;
    let scores = decision_scores(&model, k_test)?;
    let predictions = labels_from_scores(&scores);
    let metrics = evaluate(y_test, &predictions, &scores)?;
    Ok((
        metrics,
        TestOutputs {
            labels: y_test.to_vec(),
            predictions,
            scores,
        },
    ))
}

/// C with the best validation F1; ties keep the smallest C.
pub fn select_c(
    k_train: &Matrix,
    y_train: &[u8],
    k_val: &Matrix,
    y_val: &[u8],
    grid: &[f64],
    tol: f64,
) -> Result<f64> {
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for &c in &sorted {
        let (m, _) = fit_evaluate(k_train, y_train, k_val, y_val, c, tol)?;
        if best.is_none_or(|(_, f)| m.f1_minority > f) {
            best = Some((c, m.f1_minority));
        }
    }
    best.map(|(c, _)| c)
        .ok_or_else(|| Error::Config("empty C grid".into()))
}

/// (γ, C) with the best validation accuracy, scanning γ then C in ascending
/// order; ties keep the first.
pub fn select_projected(
    z_train: &Matrix,
    y_train: &[u8],
    z_val: &Matrix,
    y_val: &[u8],
    gamma_grid: &[f64],
    c_grid: &[f64],
    tol: f64,
) -> Result<(f64, f64)> {
    let mut gammas = gamma_grid.to_vec();
    gammas.sort_by(f64::total_cmp);
    let mut cs = c_grid.to_vec();
    cs.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64, f64)> = None;
    for &g in &gammas {
        let k_train = projected_kernel(z_train, z_train, g)?.values;
        let k_val = projected_kernel(z_val, z_train, g)?.values;
        for &c in &cs {
            let (m, _) = fit_evaluate(&k_train, y_train, &k_val, y_val, c, tol)?;
            if best.is_none_or(|(_, _, a)| m.accuracy > a) {
                best = Some((g, c, m.accuracy));
            }
        }
    }
    best.map(|(g, c, _)| (g, c))
        .ok_or_else(|| Error::Config("empty projected grid".into()))
}
