use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Normalization;
use crate::metrics::{DEFAULT_BOOTSTRAP_SEED, DEFAULT_RESAMPLES};
use crate::statevec::{Dof, MAX_QUBITS};

/// One embedding file: a model's embeddings for one training seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingEntry {
    pub model: String,
    pub seed_tag: String,
    pub path: PathBuf,
    #[serde(default)]
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default = "default_bootstrap_seed")]
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: DEFAULT_RESAMPLES,
            seed: DEFAULT_BOOTSTRAP_SEED,
        }
    }
}

/// Circuit/normalisation ablation evaluated by the sweep next to the base
/// settings. Unset fields inherit the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    #[serde(default)]
    pub reps: Option<usize>,
    #[serde(default)]
    pub dof: Option<Dof>,
    #[serde(default)]
    pub normalization: Option<Normalization>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub embeddings: Vec<EmbeddingEntry>,
    pub qubit_list: Vec<usize>,
    /// Untuned regularisation used by the quantum side and Tier-1 baseline.
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default = "default_c_grid")]
    pub c_grid: Vec<f64>,
    #[serde(default = "default_gamma_grid")]
    pub gamma_grid: Vec<f64>,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    #[serde(default = "default_dof")]
    pub dof: Dof,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub variants: Vec<Variant>,
    #[serde(default = "default_split_seed")]
    pub split_seed: u64,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Where raw quantum kernels are cached; defaults to `<output_dir>/kernels`.
    #[serde(default)]
    pub kernel_cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub memory_cap_bytes: Option<usize>,
    /// SMO stopping tolerance on the maximal KKT violation.
    #[serde(default = "default_svm_tol")]
    pub svm_tol: f64,
    /// Fixed effective-rank targets per qubit count for the rank-matched
    /// baseline; when absent the target is each seed's quantum kernel rank.
    #[serde(default)]
    pub rank_targets: BTreeMap<usize, f64>,
    #[serde(default = "default_rank_tol")]
    pub rank_tol_rel: f64,
    /// F1 below this counts as a collapsed classifier.
    #[serde(default = "default_collapse")]
    pub collapse_f1: f64,
    #[serde(default = "default_subsample")]
    pub variance_subsample: usize,
}

fn one() -> f64 {
    1.0
}
fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}
fn default_bootstrap_seed() -> u64 {
    DEFAULT_BOOTSTRAP_SEED
}
fn default_c_grid() -> Vec<f64> {
    vec![0.01, 0.1, 1.0, 10.0, 100.0]
}
fn default_gamma_grid() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 5.0, 10.0]
}
fn default_normalization() -> Normalization {
    Normalization::Trace
}
fn default_dof() -> Dof {
    Dof::One
}
fn default_reps() -> usize {
    1
}
fn default_split_seed() -> u64 {
    42
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_svm_tol() -> f64 {
    1e-3
}
fn default_rank_tol() -> f64 {
    0.01
}
fn default_collapse() -> f64 {
    0.05
}
fn default_subsample() -> usize {
    200
}

/// Experiments that need a tuning grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridNeed {
    None,
    C,
    GammaAndC,
}

impl ExperimentConfig {
    /// Minimal config for in-memory use.
    pub fn new(embeddings: Vec<EmbeddingEntry>, qubit_list: Vec<usize>) -> Self {
        Self {
            embeddings,
            qubit_list,
            c: 1.0,
            c_grid: default_c_grid(),
            gamma_grid: default_gamma_grid(),
            normalization: default_normalization(),
            dof: default_dof(),
            reps: default_reps(),
            variants: Vec::new(),
            split_seed: default_split_seed(),
            bootstrap: BootstrapConfig::default(),
            output_dir: default_output_dir(),
            kernel_cache_dir: None,
            memory_cap_bytes: None,
            svm_tol: default_svm_tol(),
            rank_targets: BTreeMap::new(),
            rank_tol_rel: default_rank_tol(),
            collapse_f1: default_collapse(),
            variance_subsample: default_subsample(),
        }
    }

    /// Parses a JSON config. Relative embedding paths resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let file =
            File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_reader(file).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        for e in &mut cfg.embeddings {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
            if let Some(m) = &mut e.manifest {
                if m.is_relative() {
                    *m = base.join(&*m);
                }
            }
        }
        Ok(cfg)
    }

    pub fn kernel_cache_dir(&self) -> PathBuf {
        self.kernel_cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("kernels"))
    }

    pub fn validate(&self, need: GridNeed) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.embeddings.is_empty() {
            return bad("no embeddings listed".into());
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.embeddings {
            if !seen.insert((e.model.as_str(), e.seed_tag.as_str())) {
                return bad(format!("embedding ({}, {}) listed twice", e.model, e.seed_tag));
            }
        }
        if self.qubit_list.is_empty() {
            return bad("qubit_list is empty".into());
        }
        if let Some(q) = self.qubit_list.iter().find(|&&q| !(2..=MAX_QUBITS).contains(&q)) {
            return bad(format!("qubit count {q} outside 2..={MAX_QUBITS}"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad(format!("c must be positive, got {}", self.c));
        }
        if self.reps == 0 || self.variants.iter().any(|v| v.reps == Some(0)) {
            return bad("reps must be at least 1".into());
        }
        let positive = |g: &[f64]| g.iter().all(|v| *v > 0.0 && v.is_finite());
        if matches!(need, GridNeed::C | GridNeed::GammaAndC)
            && (self.c_grid.is_empty() || !positive(&self.c_grid))
        {
            return bad("c_grid must be a nonempty list of positive values".into());
        }
        if need == GridNeed::GammaAndC && (self.gamma_grid.is_empty() || !positive(&self.gamma_grid)) {
            return bad("gamma_grid must be a nonempty list of positive values".into());
        }
        if self.bootstrap.resamples == 0 {
            return bad("bootstrap.resamples must be at least 1".into());
        }
        if !(self.svm_tol > 0.0) || !(self.rank_tol_rel > 0.0) {
            return bad("svm_tol and rank_tol_rel must be positive".into());
        }
        if self.variance_subsample < 2 {
            return bad("variance_subsample must be at least 2".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(
            &p,
            r#"{"embeddings":[{"model":"m","seed_tag":"s0","path":"emb.csv"}],"qubit_list":[4],
                "variants":[{"reps":2}],"rank_targets":{"4":6.94}}"#,
        )
        .unwrap();
        let cfg = ExperimentConfig::load(&p).unwrap();
        assert_eq!(cfg.embeddings[0].path, dir.path().join("emb.csv"));
        assert_eq!(cfg.c_grid, vec![0.01, 0.1, 1.0, 10.0, 100.0]);
        assert_eq!(cfg.normalization, Normalization::Trace);
        assert_eq!(
            cfg.bootstrap,
            BootstrapConfig {
                resamples: 10_000,
                seed: 42
            }
        );
        assert_eq!(cfg.rank_targets[&4], 6.94);
        assert_eq!(cfg.variants[0].reps, Some(2));
        cfg.validate(GridNeed::GammaAndC).unwrap();
    }

    #[test]
    fn invalid_configs() {
        let e = EmbeddingEntry {
            model: "m".into(),
            seed_tag: "s".into(),
            path: "x.csv".into(),
            manifest: None,
        };
        let mut cfg = ExperimentConfig::new(vec![e.clone()], vec![]);
        assert!(matches!(cfg.validate(GridNeed::None), Err(Error::Config(_))));
        cfg.qubit_list = vec![1];
        assert!(cfg.validate(GridNeed::None).is_err());
        cfg.qubit_list = vec![2];
        cfg.validate(GridNeed::None).unwrap();
        cfg.c_grid.clear();
        assert!(cfg.validate(GridNeed::C).is_err());
        cfg.validate(GridNeed::None).unwrap();
        cfg.embeddings.push(e);
        assert!(cfg.validate(GridNeed::None).is_err());

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, r#"{"embeddings":[],"qubit_list":[4],"typo":1}"#).unwrap();
        assert!(matches!(ExperimentConfig::load(&p), Err(Error::Config(_))));
    }
}
