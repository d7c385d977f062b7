use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use neuroencode::data::split::parse_tag_segment;
use neuroencode::data::{DatasetSplit, RunManifest};
use neuroencode::hmm::PredictionMode;
use neuroencode::ridge::default_alpha_grid;
use neuroencode::stacking::StackingMode;
use serde::{Deserialize, Serialize};

use crate::args::SharedArgs;
use crate::error::{CliError, CliResult};

/// Encoding-model hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub n_comp: usize,
    pub sw: usize,
    pub hrf_delay: usize,
    pub pca_subsample_stride: usize,
    /// Tag segment whose features fit the PCA; `None` means the fit split.
    pub pca_fit_split: Option<String>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            n_comp: 100,
            sw: 2,
            hrf_delay: 3,
            pca_subsample_stride: 1,
            pca_fit_split: None,
        }
    }
}

/// Per-model overrides of [`ModelSettings`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    pub n_comp: Option<usize>,
    pub sw: Option<usize>,
    pub hrf_delay: Option<usize>,
    pub pca_subsample_stride: Option<usize>,
    pub pca_fit_split: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    TrueX,
    Provider,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmSettings {
    pub states: usize,
    pub predictor_indices: Option<Vec<usize>>,
    pub strategy: Strategy,
    pub provider: Option<PathBuf>,
    pub mode: PredictionMode,
    pub max_iter: usize,
    pub tol: f64,
    pub x_components: usize,
    pub y_components: usize,
}

impl Default for HmmSettings {
    fn default() -> Self {
        Self {
            states: 3,
            predictor_indices: None,
            strategy: Strategy::TrueX,
            provider: None,
            mode: PredictionMode::Expectation,
            max_iter: 500,
            tol: 1e-5,
            x_components: 10,
            y_components: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: Option<PathBuf>,
    pub split: Option<String>,
    pub test_tags: Option<String>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub model_defaults: ModelSettings,
    pub models: BTreeMap<String, ModelOverrides>,
    pub alpha_grid: Vec<f64>,
    pub stacking_mode: StackingMode,
    pub hmm: HmmSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            split: None,
            test_tags: None,
            seed: None,
            output_dir: None,
            model_defaults: ModelSettings::default(),
            models: BTreeMap::new(),
            alpha_grid: default_alpha_grid(),
            stacking_mode: StackingMode::Simplex,
            hmm: HmmSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }

    /// File values (if any) with the shared flags applied on top.
    pub fn resolve(shared: &SharedArgs) -> CliResult<Self> {
        let mut cfg = match &shared.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(m) = &shared.manifest {
            cfg.manifest = Some(m.clone());
        }
        if let Some(s) = &shared.split {
            cfg.split = Some(s.clone());
        }
        if let Some(s) = shared.seed {
            cfg.seed = Some(s);
        }
        if let Some(o) = &shared.out {
            cfg.output_dir = Some(o.clone());
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> CliResult<u64> {
        self.seed
            .ok_or_else(|| CliError::usage("a seed is required (--seed or \"seed\" in the config)"))
    }

    pub fn split(&self) -> CliResult<DatasetSplit> {
        let s = self
            .split
            .as_deref()
            .ok_or_else(|| CliError::usage("a split is required (--split or \"split\" in the config)"))?;
        let mut split = DatasetSplit::parse(s)?;
        if let Some(t) = &self.test_tags {
            split = split.with_test_tags(parse_tag_segment(t)?);
        }
        Ok(split)
    }

    pub fn test_tags(&self) -> CliResult<BTreeSet<String>> {
        let t = self
            .test_tags
            .as_deref()
            .ok_or_else(|| CliError::usage("test tags are required (--test-tags or \"test_tags\" in the config)"))?;
        Ok(parse_tag_segment(t)?)
    }

    pub fn settings_for(&self, model: &str) -> ModelSettings {
        let mut s = self.model_defaults.clone();
        if let Some(o) = self.models.get(model) {
            if let Some(v) = o.n_comp {
                s.n_comp = v;
            }
            if let Some(v) = o.sw {
                s.sw = v;
            }
            if let Some(v) = o.hrf_delay {
                s.hrf_delay = v;
            }
            if let Some(v) = o.pca_subsample_stride {
                s.pca_subsample_stride = v;
            }
            if o.pca_fit_split.is_some() {
                s.pca_fit_split = o.pca_fit_split.clone();
            }
        }
        s
    }

    /// Every per-model entry must name a model of the manifest.
    pub fn check_models(&self, manifest: &RunManifest) -> CliResult<()> {
        let known = manifest.model_names();
        match self.models.keys().find(|k| !known.contains(k)) {
            Some(bad) => Err(CliError::usage(format!(
                "config names model {bad:?}, manifest has {}",
                known.join(", ")
            ))),
            None => Ok(()),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(
            &path,
            r#"{"seed": 1, "split": "1234-5", "models": {"audio": {"sw": 4}}, "hmm": {"states": 2}}"#,
        )
        .unwrap();
        let shared = SharedArgs {
            config: Some(path),
            seed: Some(9),
            ..Default::default()
        };
        let cfg = PipelineConfig::resolve(&shared).unwrap();
        assert_eq!(cfg.seed().unwrap(), 9);
        assert_eq!(cfg.split().unwrap().to_shorthand(), "1234-5");
        assert_eq!(cfg.settings_for("audio").sw, 4);
        assert_eq!(cfg.settings_for("vision").sw, 2);
        assert_eq!(cfg.hmm.states, 2);
        assert_eq!(cfg.alpha_grid, default_alpha_grid());
    }

    #[test]
    fn rejects_unknown_keys_and_missing_seed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"sead": 1}"#).unwrap();
        assert!(PipelineConfig::load(&path).is_err());
        assert!(PipelineConfig::default().seed().is_err());
        assert!(PipelineConfig::default().split().is_err());
    }
}
