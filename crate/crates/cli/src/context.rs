use std::path::{Path, PathBuf};

use neuroencode::data::{RunEntry, RunManifest};
use serde_json::Value;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::metadata::RunMetadata;

/// Effective settings of one subcommand invocation and the inputs it read.
pub struct Context {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
    inputs: Vec<(String, PathBuf)>,
}

impl Context {
    pub fn new(cfg: PipelineConfig) -> Self {
        let out = cfg.output_dir();
        Self {
            cfg,
            out,
            inputs: Vec::new(),
        }
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.out.join(rel)
    }

    pub fn record(&mut self, key: impl Into<String>, path: &Path) {
        self.inputs.push((key.into(), path.to_path_buf()));
    }

    /// Load the manifest and check the config's model names against it.
    pub fn manifest(&mut self) -> CliResult<RunManifest> {
        let path = self
            .cfg
            .manifest
            .clone()
            .ok_or_else(|| CliError::usage("a manifest is required (--manifest or \"manifest\" in the config)"))?;
        let m = RunManifest::load(&path)?;
        self.cfg.check_models(&m)?;
        self.record("manifest", &path);
        Ok(m)
    }

    /// Record the feature files of `models` and, if `bold`, the bold files
    /// of `runs`. Keys are manifest-relative paths.
    pub fn record_runs(&mut self, manifest: &RunManifest, runs: &[&RunEntry], models: &[String], bold: bool) {
        for run in runs {
            for m in models {
                if let Some(p) = run.features.get(m) {
                    self.record(p.display().to_string(), &manifest.resolve(p));
                }
            }
            if bold {
                self.record(run.bold.display().to_string(), &manifest.resolve(&run.bold));
            }
        }
    }

    /// Write the run metadata for `command` with `settings` hashed.
    pub fn finish(&self, command: &str, settings: Value) -> CliResult<()> {
        let mut meta = RunMetadata::new(command, self.cfg.seed, settings);
        for (key, path) in &self.inputs {
            meta.add_input(key.clone(), path)?;
        }
        meta.write(&self.out)?;
        Ok(())
    }
}
