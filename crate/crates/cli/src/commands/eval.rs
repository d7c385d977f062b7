use std::collections::BTreeMap;

use neuroencode::eval::pearson_per_parcel;
use serde_json::json;

use super::{runs_for, segment, write_scores};
use crate::args::EvalArgs;
use crate::context::Context;
use crate::error::{CliError, CliResult};
use crate::io::{read_json, read_ts};

pub fn run(mut ctx: Context, a: &EvalArgs) -> CliResult<()> {
    let pred = read_ts(&a.pred)?;
    ctx.record("prediction", &a.pred);
    let truth = match (&a.truth, &a.tags) {
        (Some(path), None) => {
            ctx.record("truth", path);
            read_ts(path)?
        }
        (None, Some(tags)) => {
            let manifest = ctx.manifest()?;
            let runs = runs_for(&manifest, &segment(tags)?)?;
            ctx.record_runs(&manifest, &runs, &[], true);
            manifest.load_bold(&runs)?
        }
        _ => return Err(CliError::usage("give exactly one of --truth or --tags (with --manifest)")),
    };
    let truth = match &a.parcels {
        Some(cols) => truth.select_columns(cols)?,
        None => truth,
    };
    let mut report = pearson_per_parcel(pred.view(), truth.view())?.with_subject(a.subject.clone());
    if let Some(path) = &a.groups {
        let groups: BTreeMap<String, Vec<usize>> = read_json(path)?;
        ctx.record("groups", path);
        report = report.with_groups(&groups)?;
    }
    write_scores(&ctx.out, &report)?;
    let settings = json!({
        "subject": a.subject,
        "tags": a.tags,
        "parcels": a.parcels,
    });
    ctx.finish("eval", settings)
}
