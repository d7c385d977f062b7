use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use neuroencode::data::split::all_tags;
use neuroencode::data::{generate_synthetic, Container, Coverage, ModelSpec, PlantedStates, RunEntry, RunManifest, SynthConfig};
use serde_json::json;

use crate::args::{CoverageArg, SynthArgs};
use crate::context::Context;
use crate::error::{CliError, CliResult};
use crate::io::{write_json, write_text, write_ts};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn parse_model_specs(s: &str) -> CliResult<Vec<ModelSpec>> {
    let mut out: Vec<ModelSpec> = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, dim) = part
            .split_once(':')
            .ok_or_else(|| CliError::usage(format!("model spec {part:?} is not name:dim")))?;
        let dim: usize = dim
            .parse()
            .map_err(|_| CliError::usage(format!("model spec {part:?} has an invalid dimension")))?;
        if name.is_empty() || out.iter().any(|m| m.name == name) {
            return Err(CliError::usage(format!("model name {name:?} is empty or repeated")));
        }
        out.push(ModelSpec {
            name: name.to_string(),
            dim,
        });
    }
    Ok(out)
}

pub fn run(ctx: Context, a: &SynthArgs) -> CliResult<()> {
    let seed = ctx.cfg.seed()?;
    if a.parcels == 0 {
        return Err(CliError::usage("--parcels must be positive"));
    }
    let coverage = match a.coverage {
        CoverageArg::Uniform => Coverage::Uniform,
        CoverageArg::Complementary => Coverage::Complementary {
            cross_gain: a.cross_gain,
        },
    };
    let cfg = SynthConfig {
        runs: a.runs,
        trs_per_run: a.trs,
        models: parse_model_specs(&a.models)?,
        parcels: a.parcels,
        noise: a.noise,
        stimulus_window: a.sw,
        hrf_delay: a.delay,
        coverage,
        feature_autocorrelation: a.autocorr,
        planted_states: a.states.map(|states| PlantedStates {
            states,
            separation: a.state_separation,
            self_transition: a.self_transition,
        }),
        tr_seconds: neuroencode::data::DEFAULT_TR_SECONDS,
        seed,
    };
    let ds = generate_synthetic(&cfg)?;
    let tags: Vec<&str> = all_tags().collect();

    let mut runs = Vec::with_capacity(cfg.runs);
    for i in 0..cfg.runs {
        let run_id = format!("run{:02}", i + 1);
        let mut features = BTreeMap::new();
        for (name, m) in &ds.features {
            let rel = PathBuf::from(format!("features/{name}/{run_id}.mbem"));
            write_ts(&ctx.path(&rel), &single(m.run(i).to_owned())?)?;
            features.insert(name.clone(), rel);
        }
        let bold = PathBuf::from(format!("bold/{run_id}.mbem"));
        write_ts(&ctx.path(&bold), &single(ds.bold.run(i).to_owned())?)?;
        runs.push(RunEntry {
            run_id,
            split_tags: BTreeSet::from([tags[i % tags.len()].to_string()]),
            features,
            bold,
        });
    }
    let manifest = RunManifest::new(cfg.tr_seconds, cfg.parcels, runs);
    write_text(&ctx.path(MANIFEST_FILE), &manifest.to_json())?;

    let truth = &ds.ground_truth;
    write_json(&ctx.path("ground_truth.json"), truth)?;
    let mut c = Container::new(json!({"kind": "synthetic_ground_truth"}));
    for (name, w) in &truth.weights {
        c.push(format!("weights.{name}"), w.clone());
    }
    if let (Some(means), Some(trans)) = (&truth.state_means, &truth.transition) {
        c.push("state_means", means.clone());
        c.push("transition", trans.clone());
    }
    c.write(&ctx.path("ground_truth.mbec"))?;

    ctx.finish("synth", json!({ "synth": cfg }))
}

fn single(data: ndarray::Array2<f64>) -> CliResult<neuroencode::data::TimeSeriesMatrix> {
    Ok(neuroencode::data::TimeSeriesMatrix::single_run(data)?)
}
