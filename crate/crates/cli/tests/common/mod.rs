//! Helpers for driving the binary from tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use neuroencode::data::io::{encode_binary, Dtype};
use neuroencode::data::{RunEntry, RunManifest, TimeSeriesMatrix};
use neuroencode::eval::ScoreReport;

pub struct Outcome {
    pub code: i32,
    pub stderr: String,
}

pub fn neuroencode(args: &[&str]) -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_neuroencode"))
        .args(args)
        .output()
        .expect("binary runs");
    Outcome {
        code: out.status.code().unwrap_or(-1),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Run and require success.
pub fn ok(args: &[&str]) {
    let o = neuroencode(args);
    assert_eq!(o.code, 0, "{args:?} failed: {}", o.stderr);
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Write each run of `bold` as its own file with the given tags, and a
/// manifest over them without feature sources.
pub fn write_bold_manifest(dir: &Path, bold: &TimeSeriesMatrix, tags: &[&str]) -> PathBuf {
    assert_eq!(bold.n_runs(), tags.len());
    fs::create_dir_all(dir.join("bold")).unwrap();
    let mut runs = Vec::new();
    for (i, tag) in tags.iter().enumerate() {
        let rel = PathBuf::from(format!("bold/run{i}.mbem"));
        fs::write(dir.join(&rel), encode_binary(bold.run(i), Dtype::F64)).unwrap();
        runs.push(RunEntry {
            run_id: format!("run{i}"),
            split_tags: BTreeSet::from([tag.to_string()]),
            features: BTreeMap::new(),
            bold: rel,
        });
    }
    let manifest = RunManifest::new(bold.tr_seconds(), bold.ncols(), runs);
    let path = dir.join("manifest.json");
    fs::write(&path, manifest.to_json()).unwrap();
    path
}

pub fn score_report(dir: &Path) -> ScoreReport {
    serde_json::from_str(&fs::read_to_string(dir.join("score_report.json")).unwrap()).unwrap()
}

pub fn mean_r(dir: &Path) -> f64 {
    score_report(dir).mean_r
}

/// Every regular file below `dir`, relative path to bytes.
pub fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
