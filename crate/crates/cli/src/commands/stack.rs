use std::collections::BTreeSet;
use std::fmt::Write as _;

use neuroencode::data::{DatasetSplit, RunEntry, RunManifest, TimeSeriesMatrix};
use neuroencode::eval::pearson_per_parcel;
use neuroencode::stacking::{fit_stacking, StackingMode, StackingModel};
use neuroencode::Error;
use serde_json::json;

use super::fit::fit_models;
use super::{load_models, runs_for};
use crate::args::StackArgs;
use crate::context::Context;
use crate::encoding::EncodingModel;
use crate::error::{CliError, CliResult};
use crate::io::{write_text, write_ts};

pub const STACKED: &str = "stacked";

pub struct StackOutcome {
    pub model: StackingModel,
    pub names: Vec<String>,
    /// In-sample mean r on the stack split per prediction set, then stacked.
    pub stack_scores: Vec<(String, f64)>,
    pub test_predictions: Vec<TimeSeriesMatrix>,
    pub test_stacked: TimeSeriesMatrix,
}

fn check_model_tags(models: &[EncodingModel], split: &DatasetSplit) -> CliResult<()> {
    for m in models {
        let held: BTreeSet<&String> = split.stack_tags.union(&split.test_tags).collect();
        if let Some(t) = m.fit_tags.iter().find(|t| held.contains(t)) {
            return Err(Error::Split(format!(
                "model {:?} was fit on {t:?}, which the stack or test split uses",
                m.name
            ))
            .into());
        }
    }
    Ok(())
}

pub fn stack_models(
    manifest: &RunManifest,
    models: &[EncodingModel],
    stack_runs: &[&RunEntry],
    test_runs: &[&RunEntry],
    mode: StackingMode,
) -> CliResult<StackOutcome> {
    if models.len() < 2 {
        return Err(CliError::usage(format!(
            "stacking needs at least 2 prediction sets, found {}",
            models.len()
        )));
    }
    let truth = manifest.load_bold(stack_runs)?;
    let mut stack_preds = Vec::with_capacity(models.len());
    let mut test_predictions = Vec::with_capacity(models.len());
    for m in models {
        stack_preds.push(m.predict(&manifest.load_features(&m.name, stack_runs)?)?);
        test_predictions.push(m.predict(&manifest.load_features(&m.name, test_runs)?)?);
    }
    let views: Vec<_> = stack_preds.iter().map(|p| p.view()).collect();
    let model = fit_stacking(&views, truth.view(), mode)?;
    let names: Vec<String> = models.iter().map(|m| m.name.clone()).collect();
    let mut stack_scores = Vec::with_capacity(models.len() + 1);
    for (name, p) in names.iter().zip(&stack_preds) {
        stack_scores.push((name.clone(), pearson_per_parcel(p.view(), truth.view())?.mean_r));
    }
    let stacked = model.apply(&views)?;
    stack_scores.push((STACKED.to_string(), pearson_per_parcel(stacked.view(), truth.view())?.mean_r));
    let test_views: Vec<_> = test_predictions.iter().map(|p| p.view()).collect();
    let test_stacked = test_predictions[0].with_data(model.apply(&test_views)?)?;
    Ok(StackOutcome {
        model,
        names,
        stack_scores,
        test_predictions,
        test_stacked,
    })
}

fn prepared_split(shorthand: &str, test_tags: &BTreeSet<String>) -> CliResult<DatasetSplit> {
    let split = DatasetSplit::parse(shorthand)?.with_test_tags(test_tags.clone());
    if split.stack_tags.is_empty() {
        return Err(CliError::usage(format!("split {shorthand:?} has no stack segment")));
    }
    split.check_fit_stack_disjoint()?;
    split.check_test_held_out()?;
    Ok(split)
}

pub fn run(mut ctx: Context, a: &StackArgs) -> CliResult<()> {
    if let Some(t) = &a.test_tags {
        ctx.cfg.test_tags = Some(t.clone());
    }
    if let Some(m) = a.mode {
        ctx.cfg.stacking_mode = m.into();
    }
    ctx.cfg.seed()?;
    let manifest = ctx.manifest()?;
    let shorthand = ctx.cfg.split.clone().unwrap_or_default();
    ctx.cfg.split()?;
    let test_tags = ctx.cfg.test_tags()?;
    let split = prepared_split(&shorthand, &test_tags)?;
    let stack_runs = runs_for(&manifest, &split.stack_tags)?;
    let test_runs = runs_for(&manifest, &test_tags)?;

    let dir = a.models_dir.clone().unwrap_or_else(|| ctx.path("models"));
    let models = load_models(&mut ctx, &manifest, &dir)?;
    check_model_tags(&models, &split)?;
    let names: Vec<String> = models.iter().map(|m| m.name.clone()).collect();
    ctx.record_runs(&manifest, &stack_runs, &names, true);
    ctx.record_runs(&manifest, &test_runs, &names, false);

    let mode = ctx.cfg.stacking_mode;
    let outcome = stack_models(&manifest, &models, &stack_runs, &test_runs, mode)?;
    outcome.model.to_container(&outcome.names).write(&ctx.path("stacking.mbec"))?;
    for (name, p) in outcome.names.iter().zip(&outcome.test_predictions) {
        write_ts(&ctx.path(format!("predictions/test_{name}.mbem")), p)?;
    }
    write_ts(&ctx.path(format!("predictions/test_{STACKED}.mbem")), &outcome.test_stacked)?;
    let mut csv = String::from("prediction_set,stack_mean_r\n");
    for (name, r) in &outcome.stack_scores {
        let _ = writeln!(csv, "{name},{r:.16e}");
    }
    write_text(&ctx.path("stack_scores.csv"), &csv)?;

    if let Some(probes) = &a.probe_splits {
        let mut table = String::from("split,best_single_stack_mean_r,stacked_stack_mean_r\n");
        for probe in probes {
            let ps = prepared_split(probe, &test_tags)?;
            let fitted = fit_models(&ctx.cfg, &manifest, &names, &ps.fit_tags)?;
            let p_stack = runs_for(&manifest, &ps.stack_tags)?;
            let fit_runs = runs_for(&manifest, &ps.fit_tags)?;
            ctx.record_runs(&manifest, &fit_runs, &names, true);
            ctx.record_runs(&manifest, &p_stack, &names, true);
            let o = stack_models(&manifest, &fitted, &p_stack, &test_runs, mode)?;
            let (singles, stacked) = o.stack_scores.split_at(o.stack_scores.len() - 1);
            let best = singles.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(table, "{},{best:.16e},{:.16e}", ps.to_shorthand(), stacked[0].1);
            write_ts(
                &ctx.path(format!("probe/{}/test_{STACKED}.mbem", ps.to_shorthand())),
                &o.test_stacked,
            )?;
        }
        write_text(&ctx.path("probe_splits.csv"), &table)?;
    }

    let settings = json!({
        "config": ctx.cfg,
        "split": split.to_shorthand(),
        "test_tags": test_tags,
        "models": names,
        "probe_splits": a.probe_splits,
    });
    ctx.finish("stack", settings)
}
