mod eval;
mod fit;
mod hmm;
mod predict;
mod report;
mod stack;
mod synth;

use std::collections::BTreeSet;
use std::path::Path;

use neuroencode::data::split::parse_tag_segment;
use neuroencode::data::{RunEntry, RunManifest};
use neuroencode::eval::ScoreReport;

use crate::args::{Cli, Command};
use crate::config::PipelineConfig;
use crate::context::Context;
use crate::encoding::EncodingModel;
use crate::error::{CliError, CliResult};
use crate::io::{write_json, write_text};

pub use report::REPORT_FILE;

/// File names written next to every score report.
pub const SCORES_CSV: &str = "scores.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SCORE_REPORT_JSON: &str = "score_report.json";

pub fn dispatch(cli: Cli) -> CliResult<()> {
    let cfg = PipelineConfig::resolve(&cli.shared)?;
    let ctx = Context::new(cfg);
    match cli.command {
        Command::Synth(a) => synth::run(ctx, &a),
        Command::Fit(a) => fit::run(ctx, &a),
        Command::Predict(a) => predict::run(ctx, &a),
        Command::Stack(a) => stack::run(ctx, &a),
        Command::Hmm(a) => hmm::run(ctx, &a),
        Command::Eval(a) => eval::run(ctx, &a),
        Command::Report(a) => report::run(ctx, &a),
    }
}

/// Runs carrying any tag of `segment`, failing on tags absent from the manifest.
fn runs_for<'a>(manifest: &'a RunManifest, tags: &BTreeSet<String>) -> CliResult<Vec<&'a RunEntry>> {
    manifest.require_tags(tags)?;
    Ok(manifest.runs_with_tags(tags))
}

fn segment(seg: &str) -> CliResult<BTreeSet<String>> {
    Ok(parse_tag_segment(seg)?)
}

/// Fitted encoding models found in `dir`, in manifest order.
fn load_models(ctx: &mut Context, manifest: &RunManifest, dir: &Path) -> CliResult<Vec<EncodingModel>> {
    let mut out = Vec::new();
    for name in manifest.model_names() {
        let path = dir.join(format!("{name}.mbec"));
        if path.is_file() {
            out.push(EncodingModel::load(&path)?);
            ctx.record(format!("models/{name}.mbec"), &path);
        }
    }
    if out.is_empty() {
        return Err(CliError::usage(format!("no fitted model files in {}", dir.display())));
    }
    Ok(out)
}

fn write_scores(dir: &Path, report: &ScoreReport) -> CliResult<()> {
    write_text(&dir.join(SCORES_CSV), &report.to_csv())?;
    write_json(&dir.join(SUMMARY_JSON), &report.summary_json())?;
    write_json(&dir.join(SCORE_REPORT_JSON), report)
}
