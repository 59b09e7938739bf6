use std::collections::HashSet;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Smallest dataset the split and fitting code accepts.
pub const MIN_SAMPLES: usize = 10;

/// Labelled embedding matrix. Label 0 is the majority class, 1 the minority
/// (positive) class.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub labels: Vec<u8>,
    pub features: Matrix,
}

/// Optional metadata shipped next to an embedding CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub model_name: String,
    pub dim: usize,
    #[serde(default)]
    pub seed_tag: Option<String>,
}

impl Dataset {
    pub fn new(ids: Vec<String>, labels: Vec<u8>, features: Matrix) -> Result<Self> {
        let n = features.rows();
        if ids.len() != n || labels.len() != n {
            return Err(Error::Dimension(format!(
                "{} ids and {} labels for {n} feature rows",
                ids.len(),
                labels.len()
            )));
        }
        if n < MIN_SAMPLES {
            return Err(Error::InvalidInput(format!(
                "dataset has {n} samples, need at least {MIN_SAMPLES}"
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidInput(format!("label {bad} is not binary")));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate sample id `{id}`")));
            }
        }
        Ok(Self {
            ids,
            labels,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels_at(&self, idx: &[usize]) -> Vec<u8> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }

    /// Reads `id,label,e0,…,e{D-1}` CSV.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let data_err = |msg: String| Error::Data {
            path: path.to_path_buf(),
            msg,
        };
        let file = File::open(path).map_err(|e| data_err(e.to_string()))?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let header = rdr.headers()?.clone();
        if header.len() < 3 || &header[0] != "id" || &header[1] != "label" {
            return Err(data_err(
                "header must start with `id,label` followed by embedding columns".into(),
            ));
        }
        let dim = header.len() - 2;
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = line + 2;
            if rec.len() != dim + 2 {
                return Err(data_err(format!(
                    "row {row} has {} fields, expected {}",
                    rec.len(),
                    dim + 2
                )));
            }
            ids.push(rec[0].to_string());
            let label: u8 = rec[1]
                .trim()
                .parse()
                .map_err(|_| data_err(format!("row {row}: bad label `{}`", &rec[1])))?;
            labels.push(label);
            for (k, field) in rec.iter().skip(2).enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| data_err(format!("row {row}, e{k}: bad value `{field}`")))?;
                values.push(v);
            }
        }
        let features = Matrix::new(ids.len(), dim, values).map_err(|e| data_err(e.to_string()))?;
        Self::new(ids, labels, features).map_err(|e| data_err(e.to_string()))
    }

    /// Reads a CSV and checks it against its manifest.
    pub fn from_csv_with_manifest(path: &Path, manifest: &Path) -> Result<(Self, EmbeddingManifest)> {
        let ds = Self::from_csv(path)?;
        let m: EmbeddingManifest = serde_json::from_reader(File::open(manifest)?)?;
        if m.dim != ds.dim() {
            return Err(Error::Data {
                path: manifest.to_path_buf(),
                msg: format!("manifest dim {} but CSV has {} columns", m.dim, ds.dim()),
            });
        }
        Ok((ds, m))
    }

    /// Writes the dataset in the same CSV layout `from_csv` reads.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend((0..self.dim()).map(|k| format!("e{k}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.ids[i].clone(), self.labels[i].to_string()];
            rec.extend(self.features.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> Dataset {
        let ids = (0..n).map(|i| format!("s{i}")).collect();
        let labels = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        let features = Matrix::from_fn(n, 3, |i, j| (i * 3 + j) as f64 * 0.1 - 1.0);
        Dataset::new(ids, labels, features).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        let ds = small(12);
        ds.to_csv(&path).unwrap();
        assert_eq!(Dataset::from_csv(&path).unwrap(), ds);

        let manifest = dir.path().join("emb.json");
        std::fs::write(&manifest, r#"{"model_name":"toy","dim":3,"seed_tag":"seed_0"}"#).unwrap();
        let (_, m) = Dataset::from_csv_with_manifest(&path, &manifest).unwrap();
        assert_eq!(m.seed_tag.as_deref(), Some("seed_0"));
        std::fs::write(&manifest, r#"{"model_name":"toy","dim":4}"#).unwrap();
        assert!(Dataset::from_csv_with_manifest(&path, &manifest).is_err());
    }

    #[test]
    fn validation() {
        let f = Matrix::zeros(10, 2);
        let ids: Vec<String> = (0..10).map(|i| i.to_string()).collect();
        assert!(Dataset::new(ids.clone(), vec![2; 10], f.clone()).is_err());
        let mut dup = ids.clone();
        dup[3] = "0".into();
        assert!(Dataset::new(dup, vec![0; 10], f.clone()).is_err());
        assert!(Dataset::new(ids[..9].to_vec(), vec![0; 9], Matrix::zeros(9, 2)).is_err());
    }

    #[test]
    fn bad_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "name,label,e0\na,0,1.0\n").unwrap();
        assert!(matches!(Dataset::from_csv(&path), Err(Error::Data { .. })));
        std::fs::write(&path, "id,label,e0\na,0,x\n").unwrap();
        assert!(Dataset::from_csv(&path).is_err());
        assert!(Dataset::from_csv(&dir.path().join("missing.csv")).is_err());
    }
}
