use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::{read_matrix, MatrixFormat};
use super::matrix::TimeSeriesMatrix;
use crate::error::{Error, Result};

/// One recording run and the files that describe it. Paths are relative to
/// the manifest's directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub run_id: String,
    pub split_tags: BTreeSet<String>,
    pub features: BTreeMap<String, PathBuf>,
    pub bold: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tr_seconds: f64,
    pub parcel_count: usize,
    pub runs: Vec<RunEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl RunManifest {
    pub fn new(tr_seconds: f64, parcel_count: usize, runs: Vec<RunEntry>) -> Self {
        Self {
            tr_seconds,
            parcel_count,
            runs,
            base_dir: PathBuf::new(),
        }
    }

    /// Parse and validate; checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::from_json_str(&text, base)?;
        for run in &m.runs {
            for p in run.features.values().chain(std::iter::once(&run.bold)) {
                let full = m.resolve(p);
                if !full.is_file() {
                    return Err(Error::Manifest(format!(
                        "run {:?} references missing file {}",
                        run.run_id,
                        full.display()
                    )));
                }
            }
        }
        Ok(m)
    }

    /// Parse and validate structure only (no file checks).
    pub fn from_json_str(text: &str, base_dir: PathBuf) -> Result<Self> {
        let mut m: RunManifest = serde_json::from_str(text)?;
        m.base_dir = base_dir;
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if !(self.tr_seconds.is_finite() && self.tr_seconds > 0.0) {
            return Err(Error::Manifest("tr_seconds must be positive".into()));
        }
        if self.parcel_count == 0 {
            return Err(Error::Manifest("parcel_count must be positive".into()));
        }
        if self.runs.is_empty() {
            return Err(Error::Manifest("manifest lists no runs".into()));
        }
        let mut seen = HashSet::new();
        for run in &self.runs {
            if !seen.insert(run.run_id.as_str()) {
                return Err(Error::Manifest(format!(
                    "duplicate run_id {:?}",
                    run.run_id
                )));
            }
        }
        let models: BTreeSet<&String> = self.runs[0].features.keys().collect();
        for run in &self.runs[1..] {
            let here: BTreeSet<&String> = run.features.keys().collect();
            if here != models {
                return Err(Error::Manifest(format!(
                    "run {:?} lists feature models {:?}, expected {:?}",
                    run.run_id, here, models
                )));
            }
        }
        Ok(())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn model_names(&self) -> Vec<String> {
        self.runs[0].features.keys().cloned().collect()
    }

    pub fn all_tags(&self) -> BTreeSet<String> {
        self.runs
            .iter()
            .flat_map(|r| r.split_tags.iter().cloned())
            .collect()
    }

    /// Error naming the first requested tag that no run carries.
    pub fn require_tags(&self, tags: &BTreeSet<String>) -> Result<()> {
        let present = self.all_tags();
        match tags.iter().find(|t| !present.contains(*t)) {
            Some(missing) => Err(Error::Manifest(format!(
                "no run carries split tag {missing:?}"
            ))),
            None => Ok(()),
        }
    }

    /// Runs carrying at least one of `tags`, in manifest order.
    pub fn runs_with_tags(&self, tags: &BTreeSet<String>) -> Vec<&RunEntry> {
        self.runs
            .iter()
            .filter(|r| r.split_tags.iter().any(|t| tags.contains(t)))
            .collect()
    }

    pub fn load_features(&self, model: &str, runs: &[&RunEntry]) -> Result<TimeSeriesMatrix> {
        let parts = runs
            .iter()
            .map(|r| {
                let p = r.features.get(model).ok_or_else(|| {
                    Error::Manifest(format!("run {:?} has no model {model:?}", r.run_id))
                })?;
                self.read_run_matrix(p)
            })
            .collect::<Result<Vec<_>>>()?;
        TimeSeriesMatrix::concat(&parts)
    }

    pub fn load_bold(&self, runs: &[&RunEntry]) -> Result<TimeSeriesMatrix> {
        let parts = runs
            .iter()
            .map(|r| {
                let m = self.read_run_matrix(&r.bold)?;
                if m.ncols() != self.parcel_count {
                    return Err(Error::DimensionMismatch(format!(
                        "run {:?} bold has {} parcels, manifest declares {}",
                        r.run_id,
                        m.ncols(),
                        self.parcel_count
                    )));
                }
                Ok(m)
            })
            .collect::<Result<Vec<_>>>()?;
        TimeSeriesMatrix::concat(&parts)
    }

    fn read_run_matrix(&self, p: &Path) -> Result<TimeSeriesMatrix> {
        let full = self.resolve(p);
        let m = read_matrix(&full, MatrixFormat::from_path(&full))?;
        TimeSeriesMatrix::new(m.into_data(), vec![0], self.tr_seconds)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "tr_seconds": 1.49,
        "parcel_count": 4,
        "runs": [
            {"run_id": "a", "split_tags": ["s01"], "features": {"vision": "f/a.mbem"}, "bold": "b/a.mbem"},
            {"run_id": "b", "split_tags": ["s05", "bourne"], "features": {"vision": "f/b.mbem"}, "bold": "b/b.mbem"}
        ]
    }"#;

    #[test]
    fn parses_and_selects_by_tag() {
        let m = RunManifest::from_json_str(SAMPLE, PathBuf::from("/data")).unwrap();
        assert_eq!(m.model_names(), vec!["vision".to_string()]);
        let tags: BTreeSet<String> = ["bourne".to_string()].into();
        let runs = m.runs_with_tags(&tags);
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].run_id, "b");
        assert_eq!(m.resolve(&runs[0].bold), PathBuf::from("/data/b/b.mbem"));
        let missing: BTreeSet<String> = ["figures".to_string()].into();
        let err = m.require_tags(&missing).unwrap_err().to_string();
        assert!(err.contains("figures"));
    }

    #[test]
    fn rejects_duplicate_run_ids() {
        let dup = SAMPLE.replace("\"run_id\": \"b\"", "\"run_id\": \"a\"");
        assert!(RunManifest::from_json_str(&dup, PathBuf::new()).is_err());
    }

    #[test]
    fn load_rejects_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        fs::write(&p, SAMPLE).unwrap();
        let err = RunManifest::load(&p).unwrap_err().to_string();
        assert!(err.contains("missing file"));
    }
}
