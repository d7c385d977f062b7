use std::fmt::Write as _;

use neuroencode::eval::{aggregate_subjects, ScoreReport};
use serde_json::json;

use crate::args::ReportArgs;
use crate::context::Context;
use crate::error::CliResult;
use crate::io::{read_json, write_json, write_text};

pub const REPORT_FILE: &str = "report.csv";

pub fn run(mut ctx: Context, a: &ReportArgs) -> CliResult<()> {
    let mut reports: Vec<ScoreReport> = Vec::with_capacity(a.inputs.len());
    for (i, path) in a.inputs.iter().enumerate() {
        reports.push(read_json(path)?);
        ctx.record(format!("report{i}"), path);
    }
    let aggregate = aggregate_subjects(&reports)?;
    let mut csv = String::from("subject_id,mean_r\n");
    for r in &reports {
        let _ = writeln!(csv, "{},{:.16e}", r.subject_id, r.mean_r);
    }
    let _ = writeln!(csv, "aggregate,{aggregate:.16e}");
    write_text(&ctx.path(REPORT_FILE), &csv)?;
    let subjects: Vec<_> = reports
        .iter()
        .map(|r| json!({"subject_id": r.subject_id, "mean_r": r.mean_r, "per_group_r": r.per_group_r}))
        .collect();
    write_json(&ctx.path("report.json"), &json!({"subjects": subjects, "aggregate": aggregate}))?;
    ctx.finish("report", json!({"n_reports": reports.len()}))
}
