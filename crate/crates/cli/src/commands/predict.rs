use serde_json::json;

use super::{load_models, runs_for, segment};
use crate::args::PredictArgs;
use crate::context::Context;
use crate::error::CliResult;
use crate::io::write_ts;

pub fn run(mut ctx: Context, a: &PredictArgs) -> CliResult<()> {
    let manifest = ctx.manifest()?;
    let tags = segment(&a.tags)?;
    let runs = runs_for(&manifest, &tags)?;
    let models = load_models(&mut ctx, &manifest, &a.models_dir)?;
    let names: Vec<String> = models.iter().map(|m| m.name.clone()).collect();
    ctx.record_runs(&manifest, &runs, &names, false);
    for m in &models {
        let pred = m.predict(&manifest.load_features(&m.name, &runs)?)?;
        write_ts(&ctx.path(format!("predictions/{}.mbem", m.name)), &pred)?;
    }
    ctx.finish("predict", json!({"tags": tags, "models": names}))
}
