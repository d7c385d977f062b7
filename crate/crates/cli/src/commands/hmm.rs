use std::collections::BTreeSet;
use std::fmt::Write as _;

use neuroencode::data::DatasetSplit;
use neuroencode::eval::pearson_per_parcel;
use neuroencode::hmm::{predict_glhmm_pipeline, GlhmmPipelineConfig, HmmConfig, PreprocessConfig};
use neuroencode::Error;
use serde_json::json;

use super::{runs_for, write_scores};
use crate::args::{HmmArgs, StrategyArg};
use crate::config::{HmmSettings, Strategy};
use crate::context::Context;
use crate::error::{CliError, CliResult};
use crate::io::{read_ts, write_json, write_text, write_ts};

fn apply_flags(h: &mut HmmSettings, a: &HmmArgs) {
    if let Some(v) = a.states {
        h.states = v;
    }
    if let Some(v) = &a.predictors {
        h.predictor_indices = Some(v.clone());
    }
    if let Some(v) = a.strategy {
        h.strategy = match v {
            StrategyArg::TrueX => Strategy::TrueX,
            StrategyArg::Provider => Strategy::Provider,
        };
    }
    if let Some(v) = &a.provider {
        h.provider = Some(v.clone());
    }
    if let Some(v) = a.mode {
        h.mode = v.into();
    }
    if let Some(v) = a.max_iter {
        h.max_iter = v;
    }
    if let Some(v) = a.tol {
        h.tol = v;
    }
    if let Some(v) = a.x_components {
        h.x_components = v;
    }
    if let Some(v) = a.y_components {
        h.y_components = v;
    }
}

/// Predictor and dependent column lists.
fn partition(predictors: &[usize], parcels: usize) -> CliResult<(Vec<usize>, Vec<usize>)> {
    let set: BTreeSet<usize> = predictors.iter().copied().collect();
    if set.is_empty() || set.len() != predictors.len() {
        return Err(CliError::usage("predictor indices must be nonempty and distinct"));
    }
    if let Some(bad) = set.iter().find(|&&i| i >= parcels) {
        return Err(CliError::usage(format!("predictor index {bad} out of range for {parcels} parcels")));
    }
    let dependent: Vec<usize> = (0..parcels).filter(|i| !set.contains(i)).collect();
    if dependent.is_empty() {
        return Err(CliError::usage("predictors cover every parcel; nothing left to predict"));
    }
    Ok((predictors.to_vec(), dependent))
}

pub fn run(mut ctx: Context, a: &HmmArgs) -> CliResult<()> {
    apply_flags(&mut ctx.cfg.hmm, a);
    if let Some(t) = &a.test_tags {
        ctx.cfg.test_tags = Some(t.clone());
    }
    let seed = ctx.cfg.seed()?;
    let manifest = ctx.manifest()?;
    let split: DatasetSplit = ctx.cfg.split()?;
    let test_tags = ctx.cfg.test_tags()?;
    split.check_test_held_out()?;
    let train_runs = runs_for(&manifest, &split.fit_tags)?;
    let test_runs = runs_for(&manifest, &test_tags)?;
    ctx.record_runs(&manifest, &train_runs, &[], true);
    ctx.record_runs(&manifest, &test_runs, &[], true);
    let train = manifest.load_bold(&train_runs)?;
    let test = manifest.load_bold(&test_runs)?;
    let h = ctx.cfg.hmm.clone();

    let cfg = GlhmmPipelineConfig {
        states: h.states,
        preprocess: PreprocessConfig {
            x_components: h.x_components,
            y_components: h.y_components,
            pca_stride: 1,
        },
        fit: HmmConfig {
            max_iter: h.max_iter,
            tol: h.tol,
            seed,
            ..HmmConfig::default()
        },
        mode: h.mode,
    };

    let (out, dependent) = match &h.predictor_indices {
        Some(pred) => {
            let (pred, dependent) = partition(pred, manifest.parcel_count)?;
            let train_x = train.select_columns(&pred)?;
            let train_y = train.select_columns(&dependent)?;
            let test_x = match h.strategy {
                Strategy::TrueX => test.select_columns(&pred)?,
                Strategy::Provider => {
                    let path = h
                        .provider
                        .clone()
                        .ok_or_else(|| CliError::usage("the provider strategy needs --provider predictions"))?;
                    let m = read_ts(&path)?;
                    ctx.record("provider", &path);
                    if m.nrows() != test.nrows() || m.ncols() != pred.len() {
                        return Err(Error::DimensionMismatch(format!(
                            "provider predictions are {}x{}, expected {}x{}",
                            m.nrows(),
                            m.ncols(),
                            test.nrows(),
                            pred.len()
                        ))
                        .into());
                    }
                    test.with_data(m.into_data())?
                }
            };
            let out = predict_glhmm_pipeline(Some(&train_x), &train_y, Some(&test_x), test.nrows(), &cfg)?;
            (out, dependent)
        }
        None => {
            let out = predict_glhmm_pipeline(None, &train, None, test.nrows(), &cfg)?;
            (out, (0..manifest.parcel_count).collect())
        }
    };

    let truth = test.select_columns(&dependent)?;
    let report = pearson_per_parcel(out.prediction.view(), truth.view())?.with_subject(a.subject.clone());
    write_scores(&ctx.out, &report)?;
    out.model.to_container().write(&ctx.path("hmm_model.mbec"))?;
    out.preprocessor.to_container().write(&ctx.path("hmm_preprocessor.mbec"))?;
    write_ts(&ctx.path("predictions/test_hmm.mbem"), &out.prediction)?;
    let mut trace = String::from("iteration,free_energy\n");
    for (i, f) in out.model.free_energy_trace.iter().enumerate() {
        let _ = writeln!(trace, "{i},{f:.16e}");
    }
    write_text(&ctx.path("free_energy.csv"), &trace)?;
    write_json(
        &ctx.path("hmm_log.json"),
        &json!({
            "kind": out.model.kind,
            "states": h.states,
            "converged": out.model.converged,
            "iterations": out.model.free_energy_trace.len(),
            "frozen_states": out.model.frozen_states,
            "dependent_parcels": dependent,
            "mean_r": report.mean_r,
        }),
    )?;

    let settings = json!({
        "config": ctx.cfg,
        "split": split.to_shorthand(),
        "test_tags": test_tags,
    });
    ctx.finish("hmm", settings)
}
