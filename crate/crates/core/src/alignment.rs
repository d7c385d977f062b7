//! Lagged design matrices.
//!
//! Row `t` of the design concatenates the feature rows
//! `t - delay, t - delay - 1, ..., t - delay - sw + 1` (most recent lag
//! first), never reaching back across a run boundary.

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Lags before the start of a run are zero vectors.
    #[default]
    ZeroPad,
    /// Rows without a complete in-run lag window are removed.
    DropRows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub stimulus_window: usize,
    pub hrf_delay: usize,
    #[serde(default)]
    pub boundary_policy: BoundaryPolicy,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            stimulus_window: 1,
            hrf_delay: 3,
            boundary_policy: BoundaryPolicy::ZeroPad,
        }
    }
}

impl AlignmentConfig {
    pub fn new(stimulus_window: usize, hrf_delay: usize) -> Self {
        Self {
            stimulus_window,
            hrf_delay,
            boundary_policy: BoundaryPolicy::ZeroPad,
        }
    }

    pub fn with_policy(mut self, policy: BoundaryPolicy) -> Self {
        self.boundary_policy = policy;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.stimulus_window == 0 {
            return Err(Error::Config("stimulus window must be at least 1".into()));
        }
        Ok(())
    }

    /// Offset from the current row to the oldest lag in the window.
    fn max_lag(&self) -> usize {
        self.hrf_delay + self.stimulus_window - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub matrix: TimeSeriesMatrix,
    /// For `DropRows`, the input row each output row corresponds to.
    pub row_map: Option<Vec<usize>>,
}

pub fn build_design(features: &TimeSeriesMatrix, cfg: &AlignmentConfig) -> Result<Design> {
    cfg.validate()?;
    let (t, d) = (features.nrows(), features.ncols());
    let sw = cfg.stimulus_window;
    let x = features.data();
    let mut out = Array2::<f64>::zeros((t, d * sw));
    for run in features.run_ranges() {
        for row in run.clone() {
            for lag in 0..sw {
                let offset = cfg.hrf_delay + lag;
                if row >= run.start + offset {
                    out.slice_mut(s![row, lag * d..(lag + 1) * d])
                        .assign(&x.row(row - offset));
                }
            }
        }
    }

    match cfg.boundary_policy {
        BoundaryPolicy::ZeroPad => Ok(Design {
            matrix: features.with_data(out)?,
            row_map: None,
        }),
        BoundaryPolicy::DropRows => {
            let mut keep = Vec::new();
            let mut boundaries = Vec::new();
            for run in features.run_ranges() {
                let first_full = run.start + cfg.max_lag();
                if first_full < run.end {
                    boundaries.push(keep.len());
                    keep.extend(first_full..run.end);
                }
            }
            if keep.is_empty() {
                return Err(Error::Config(format!(
                    "stimulus window {} with delay {} leaves no complete rows in any run",
                    sw, cfg.hrf_delay
                )));
            }
            let data = out.select(Axis(0), &keep);
            Ok(Design {
                matrix: TimeSeriesMatrix::new(data, boundaries, features.tr_seconds())?,
                row_map: Some(keep),
            })
        }
    }
}

/// Restrict `m` to the rows named by a design's row map, keeping run
/// structure consistent with the design.
pub fn select_rows(m: &TimeSeriesMatrix, design: &Design) -> Result<TimeSeriesMatrix> {
    match &design.row_map {
        None => Ok(m.clone()),
        Some(rows) => {
            if rows.iter().any(|&r| r >= m.nrows()) {
                return Err(Error::DimensionMismatch(
                    "row map refers past the end of the target".into(),
                ));
            }
            TimeSeriesMatrix::new(
                m.data().select(Axis(0), rows),
                design.matrix.run_boundaries().to_vec(),
                m.tr_seconds(),
            )
        }
    }
}

/// Succeeds iff both series have the same length and run segmentation.
pub fn target_alignment_check(features: &TimeSeriesMatrix, bold: &TimeSeriesMatrix) -> Result<()> {
    if features.nrows() != bold.nrows() {
        return Err(Error::AlignmentMismatch(format!(
            "features have {} rows but bold has {}",
            features.nrows(),
            bold.nrows()
        )));
    }
    let (a, b) = (features.run_boundaries(), bold.run_boundaries());
    let n = a.len().max(b.len());
    for i in 0..n {
        if a.get(i) != b.get(i) {
            return Err(Error::AlignmentMismatch(format!(
                "run boundary index {i} differs: features {:?}, bold {:?}",
                a.get(i),
                b.get(i)
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn ramp(t: usize) -> TimeSeriesMatrix {
        TimeSeriesMatrix::single_run(Array2::from_shape_fn((t, 1), |(i, _)| i as f64)).unwrap()
    }

    #[test]
    fn identity_configuration() {
        let f = TimeSeriesMatrix::single_run(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let d = build_design(&f, &AlignmentConfig::new(1, 0)).unwrap();
        assert_eq!(d.matrix, f);
    }

    #[test]
    fn window_two_delay_three() {
        let d = build_design(&ramp(8), &AlignmentConfig::new(2, 3)).unwrap();
        assert_eq!(d.matrix.data().row(5).to_vec(), vec![2.0, 1.0]);
        assert_eq!(d.matrix.data().row(3).to_vec(), vec![0.0, 0.0]);
        assert_eq!(d.matrix.data().row(4).to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn lags_do_not_cross_runs() {
        let f = TimeSeriesMatrix::new(
            Array2::from_shape_fn((10, 1), |(i, _)| i as f64 + 1.0),
            vec![0, 5],
            1.49,
        )
        .unwrap();
        let d = build_design(&f, &AlignmentConfig::new(1, 2)).unwrap();
        let col: Vec<f64> = d.matrix.data().column(0).to_vec();
        assert_eq!(col, vec![0.0, 0.0, 1.0, 2.0, 3.0, 0.0, 0.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn drop_rows_keeps_complete_windows() {
        let f = TimeSeriesMatrix::new(
            Array2::from_shape_fn((10, 1), |(i, _)| i as f64),
            vec![0, 3],
            1.49,
        )
        .unwrap();
        let cfg = AlignmentConfig::new(2, 1).with_policy(BoundaryPolicy::DropRows);
        let d = build_design(&f, &cfg).unwrap();
        // first run (3 rows) has only row 2 complete; second run rows 5..10
        assert_eq!(d.row_map.as_deref(), Some(&[2, 5, 6, 7, 8, 9][..]));
        assert_eq!(d.matrix.run_boundaries(), &[0, 1]);
        assert_eq!(d.matrix.data().row(0).to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn drop_rows_that_empty_everything_fail() {
        let cfg = AlignmentConfig::new(3, 3).with_policy(BoundaryPolicy::DropRows);
        assert!(build_design(&ramp(5), &cfg).is_err());
    }

    #[test]
    fn zero_window_is_rejected() {
        assert!(build_design(&ramp(5), &AlignmentConfig::new(0, 0)).is_err());
    }

    #[test]
    fn alignment_check_reports_divergence() {
        let a = TimeSeriesMatrix::new(Array2::zeros((9, 1)), vec![0, 3, 6], 1.49).unwrap();
        assert!(target_alignment_check(&a, &a).is_ok());

        let short = TimeSeriesMatrix::single_run(Array2::zeros((8, 1))).unwrap();
        let err = target_alignment_check(&a, &short).unwrap_err().to_string();
        assert!(err.contains('9') && err.contains('8'));

        let b = TimeSeriesMatrix::new(Array2::zeros((9, 1)), vec![0, 3, 7], 1.49).unwrap();
        let err = target_alignment_check(&a, &b).unwrap_err().to_string();
        assert!(err.contains("index 2"), "{err}");
    }
}
