//! Per-parcel Pearson scoring and its aggregations.

use std::collections::BTreeMap;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub subject_id: String,
    pub per_parcel_r: Vec<f64>,
    pub mean_r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_group_r: Option<BTreeMap<String, f64>>,
    /// Parcels where either series had zero variance (scored as 0).
    pub degenerate_parcels: Vec<usize>,
}

/// Sample Pearson correlation, computed in two passes. Returns `None` when
/// either side has zero variance.
pub fn pearson_checked(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation with the zero-variance convention `r = 0`.
pub fn pearson(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    pearson_checked(a, b).unwrap_or(0.0)
}

pub fn pearson_per_parcel(pred: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>) -> Result<ScoreReport> {
    if pred.dim() != truth.dim() {
        return Err(Error::DimensionMismatch(format!(
            "prediction is {:?}, truth is {:?}",
            pred.dim(),
            truth.dim()
        )));
    }
    if pred.nrows() < 3 {
        return Err(Error::Config(format!(
            "scoring needs at least 3 time points, got {}",
            pred.nrows()
        )));
    }
    let mut per_parcel_r = Vec::with_capacity(pred.ncols());
    let mut degenerate_parcels = Vec::new();
    for (p, (a, b)) in pred.columns().into_iter().zip(truth.columns()).enumerate() {
        match pearson_checked(a, b) {
            Some(r) => per_parcel_r.push(r),
            None => {
                per_parcel_r.push(0.0);
                degenerate_parcels.push(p);
            }
        }
    }
    let mean_r = mean(&per_parcel_r);
    Ok(ScoreReport {
        subject_id: String::new(),
        per_parcel_r,
        mean_r,
        per_group_r: None,
        degenerate_parcels,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean over subjects of each subject's parcel-mean correlation.
pub fn aggregate_subjects(reports: &[ScoreReport]) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::Config("no subject reports to aggregate".into()));
    }
    Ok(reports.iter().map(|r| r.mean_r).sum::<f64>() / reports.len() as f64)
}

pub fn group_scores(report: &ScoreReport, groups: &BTreeMap<String, Vec<usize>>) -> Result<BTreeMap<String, f64>> {
    let p = report.per_parcel_r.len();
    groups
        .iter()
        .map(|(name, idx)| {
            if idx.is_empty() {
                return Err(Error::Config(format!("group {name:?} is empty")));
            }
            if let Some(bad) = idx.iter().find(|&&i| i >= p) {
                return Err(Error::Config(format!(
                    "group {name:?} has parcel index {bad}, only {p} parcels"
                )));
            }
            let vals: Vec<f64> = idx.iter().map(|&i| report.per_parcel_r[i]).collect();
            Ok((name.clone(), mean(&vals)))
        })
        .collect()
}

impl ScoreReport {
    pub fn with_subject(mut self, id: impl Into<String>) -> Self {
        self.subject_id = id.into();
        self
    }

    pub fn with_groups(mut self, groups: &BTreeMap<String, Vec<usize>>) -> Result<Self> {
        self.per_group_r = Some(group_scores(&self, groups)?);
        Ok(self)
    }

    /// `parcel_index,r` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parcel_index,r\n");
        for (i, r) in self.per_parcel_r.iter().enumerate() {
            out.push_str(&format!("{i},{r:.16e}\n"));
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "subject_id": self.subject_id,
            "mean_r": self.mean_r,
            "n_parcels": self.per_parcel_r.len(),
            "per_group_r": self.per_group_r,
            "degenerate_parcels": self.degenerate_parcels,
        })
    }
}
