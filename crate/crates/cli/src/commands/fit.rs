use std::collections::BTreeSet;
use std::fmt::Write as _;

use neuroencode::data::{RunManifest, TimeSeriesMatrix};
use neuroencode::eval::pearson_per_parcel;
use serde::Serialize;
use serde_json::json;

use super::{runs_for, segment};
use crate::args::FitArgs;
use crate::config::{ModelSettings, PipelineConfig};
use crate::context::Context;
use crate::encoding::EncodingModel;
use crate::error::{CliError, CliResult};
use crate::io::{write_json, write_text};

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub model: String,
    pub sw: usize,
    pub n_comp: usize,
    pub n_comp_used: usize,
    pub stack_mean_r: f64,
}

#[derive(Debug, Serialize)]
struct ModelLog {
    model: String,
    settings: ModelSettings,
    n_comp_used: usize,
    fit_rows: usize,
    alpha_per_target: Vec<f64>,
    stack_mean_r: Option<f64>,
}

/// Apply the fit flags to the config; flag values replace per-model entries.
fn apply_flags(cfg: &mut PipelineConfig, a: &FitArgs) {
    let d = &mut cfg.model_defaults;
    if let Some(v) = a.n_comp {
        d.n_comp = v;
    }
    if let Some(v) = a.sw {
        d.sw = v;
    }
    if let Some(v) = a.delay {
        d.hrf_delay = v;
    }
    if let Some(v) = a.stride {
        d.pca_subsample_stride = v;
    }
    if let Some(v) = &a.pca_fit_split {
        d.pca_fit_split = Some(v.clone());
    }
    for o in cfg.models.values_mut() {
        if a.n_comp.is_some() {
            o.n_comp = None;
        }
        if a.sw.is_some() {
            o.sw = None;
        }
        if a.delay.is_some() {
            o.hrf_delay = None;
        }
        if a.stride.is_some() {
            o.pca_subsample_stride = None;
        }
        if a.pca_fit_split.is_some() {
            o.pca_fit_split = None;
        }
    }
    if let Some(g) = &a.alpha_grid {
        cfg.alpha_grid = g.clone();
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("model,sw,n_comp,n_comp_used,stack_mean_r\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{:.16e}", r.model, r.sw, r.n_comp, r.n_comp_used, r.stack_mean_r);
    }
    out
}

pub fn run(mut ctx: Context, a: &FitArgs) -> CliResult<()> {
    apply_flags(&mut ctx.cfg, a);
    let seed = ctx.cfg.seed()?;
    let manifest = ctx.manifest()?;
    let split = ctx.cfg.split()?;
    split.check_fit_stack_disjoint()?;
    let fit_runs = runs_for(&manifest, &split.fit_tags)?;

    let all = manifest.model_names();
    let models = match &a.models {
        Some(list) => {
            if let Some(bad) = list.iter().find(|m| !all.contains(m)) {
                return Err(CliError::usage(format!("unknown model {bad:?}, manifest has {}", all.join(", "))));
            }
            list.clone()
        }
        None => all,
    };

    let sweeping = a.sweep_sw.is_some() || a.sweep_n_comp.is_some();
    let stack = if sweeping || !split.stack_tags.is_empty() {
        if split.stack_tags.is_empty() {
            return Err(CliError::usage("a sweep is scored on the stack split; give a split of the form fit-stack"));
        }
        let runs = runs_for(&manifest, &split.stack_tags)?;
        ctx.record_runs(&manifest, &runs, &models, true);
        let bold = manifest.load_bold(&runs)?;
        Some((runs, bold))
    } else {
        None
    };

    ctx.record_runs(&manifest, &fit_runs, &models, true);
    let bold = manifest.load_bold(&fit_runs)?;
    let mut logs = Vec::new();
    for name in &models {
        let base = ctx.cfg.settings_for(name);
        let features = manifest.load_features(name, &fit_runs)?;
        let pca_features = match &base.pca_fit_split {
            Some(seg) => {
                let runs = runs_for(&manifest, &segment(seg)?)?;
                ctx.record_runs(&manifest, &runs, std::slice::from_ref(name), false);
                Some(manifest.load_features(name, &runs)?)
            }
            None => None,
        };
        let stack_features: Option<TimeSeriesMatrix> = match &stack {
            Some((runs, _)) => Some(manifest.load_features(name, runs)?),
            None => None,
        };
        let fit_one = |settings: &ModelSettings| {
            EncodingModel::fit(
                name,
                &features,
                pca_features.as_ref(),
                &bold,
                settings,
                &ctx.cfg.alpha_grid,
                &split.fit_tags,
            )
        };
        let score = |m: &EncodingModel| -> CliResult<Option<f64>> {
            match (&stack, &stack_features) {
                (Some((_, truth)), Some(f)) => Ok(Some(pearson_per_parcel(m.predict(f)?.view(), truth.view())?.mean_r)),
                _ => Ok(None),
            }
        };

        let (model, settings, stack_r) = if sweeping {
            let sws = a.sweep_sw.clone().unwrap_or_else(|| vec![base.sw]);
            let ncs = a.sweep_n_comp.clone().unwrap_or_else(|| vec![base.n_comp]);
            let mut rows = Vec::new();
            let mut best: Option<(EncodingModel, ModelSettings, f64)> = None;
            for &sw in &sws {
                for &n_comp in &ncs {
                    let settings = ModelSettings {
                        sw,
                        n_comp,
                        ..base.clone()
                    };
                    let m = fit_one(&settings)?;
                    let r = score(&m)?.expect("stack data present");
                    rows.push(SweepRow {
                        model: name.clone(),
                        sw,
                        n_comp,
                        n_comp_used: m.pca.n_components(),
                        stack_mean_r: r,
                    });
                    if best.as_ref().is_none_or(|b| r > b.2) {
                        best = Some((m, settings, r));
                    }
                }
            }
            write_text(&ctx.path(format!("sweep_{name}.csv")), &sweep_csv(&rows))?;
            let (m, s, r) = best.ok_or_else(|| CliError::usage("sweep lists must not be empty"))?;
            (m, s, Some(r))
        } else {
            let m = fit_one(&base)?;
            let r = score(&m)?;
            (m, base, r)
        };
        model.save(&ctx.path(format!("models/{name}.mbec")))?;
        logs.push(ModelLog {
            model: name.clone(),
            settings,
            n_comp_used: model.pca.n_components(),
            fit_rows: bold.nrows(),
            alpha_per_target: model.ridge.alpha_per_target.clone(),
            stack_mean_r: stack_r,
        });
    }
    write_json(&ctx.path("fit_log.json"), &logs)?;
    let settings = json!({
        "config": ctx.cfg,
        "models": models,
        "sweep_sw": a.sweep_sw,
        "sweep_n_comp": a.sweep_n_comp,
        "split": split.to_shorthand(),
        "seed": seed,
    });
    ctx.finish("fit", settings)
}

/// Fit every model of `names` with the config settings on `fit_tags`.
pub(crate) fn fit_models(
    cfg: &PipelineConfig,
    manifest: &RunManifest,
    names: &[String],
    fit_tags: &BTreeSet<String>,
) -> CliResult<Vec<EncodingModel>> {
    let runs = runs_for(manifest, fit_tags)?;
    let bold = manifest.load_bold(&runs)?;
    names
        .iter()
        .map(|name| {
            let settings = cfg.settings_for(name);
            let features = manifest.load_features(name, &runs)?;
            let pca_features = match &settings.pca_fit_split {
                Some(seg) => Some(manifest.load_features(name, &runs_for(manifest, &segment(seg)?)?)?),
                None => None,
            };
            Ok(EncodingModel::fit(
                name,
                &features,
                pca_features.as_ref(),
                &bold,
                &settings,
                &cfg.alpha_grid,
                fit_tags,
            )?)
        })
        .collect()
}
