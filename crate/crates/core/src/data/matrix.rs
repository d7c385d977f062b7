use std::ops::Range;

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Acquisition interval of the challenge recordings, in seconds.
pub const DEFAULT_TR_SECONDS: f64 = 1.49;

/// Dense `T × D` time series (rows are TRs) split into contiguous runs.
///
/// Holds both stimulus feature series and parcel BOLD series. Every
/// constructor validates the segmentation and rejects non-finite entries, so
/// a value of this type can be handed to any numerical routine as-is.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix {
    data: Array2<f64>,
    run_boundaries: Vec<usize>,
    tr_seconds: f64,
}

impl TimeSeriesMatrix {
    pub fn new(data: Array2<f64>, run_boundaries: Vec<usize>, tr_seconds: f64) -> Result<Self> {
        let (rows, cols) = data.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix);
        }
        if !(tr_seconds.is_finite() && tr_seconds > 0.0) {
            return Err(Error::Segmentation(format!(
                "tr_seconds must be positive, got {tr_seconds}"
            )));
        }
        if run_boundaries.first() != Some(&0) {
            return Err(Error::Segmentation(
                "run boundaries must start at row 0".into(),
            ));
        }
        for w in run_boundaries.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Segmentation(format!(
                    "run boundaries must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if *run_boundaries.last().unwrap() >= rows {
            return Err(Error::Segmentation(format!(
                "run boundary {} leaves an empty final run (T = {rows})",
                run_boundaries.last().unwrap()
            )));
        }
        check_finite(data.view())?;
        Ok(Self {
            data,
            run_boundaries,
            tr_seconds,
        })
    }

    /// A matrix consisting of one run with the default TR.
    pub fn single_run(data: Array2<f64>) -> Result<Self> {
        Self::new(data, vec![0], DEFAULT_TR_SECONDS)
    }

    /// Stack matrices vertically; each input's runs become runs of the result.
    pub fn concat(parts: &[TimeSeriesMatrix]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyMatrix)?;
        let cols = first.ncols();
        let mut boundaries = Vec::new();
        let mut offset = 0;
        for p in parts {
            if p.ncols() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "cannot concatenate matrices with {} and {} columns",
                    cols,
                    p.ncols()
                )));
            }
            if (p.tr_seconds - first.tr_seconds).abs() > 1e-12 {
                return Err(Error::Segmentation(format!(
                    "inconsistent TR durations {} and {}",
                    first.tr_seconds, p.tr_seconds
                )));
            }
            boundaries.extend(p.run_boundaries.iter().map(|b| b + offset));
            offset += p.nrows();
        }
        let views: Vec<ArrayView2<'_, f64>> = parts.iter().map(|p| p.data.view()).collect();
        let data = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        Ok(Self {
            data,
            run_boundaries: boundaries,
            tr_seconds: first.tr_seconds,
        })
    }

    /// Same segmentation, new contents (row count must match).
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        if data.nrows() != self.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} rows, got {}",
                self.nrows(),
                data.nrows()
            )));
        }
        Self::new(data, self.run_boundaries.clone(), self.tr_seconds)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn tr_seconds(&self) -> f64 {
        self.tr_seconds
    }

    pub fn run_boundaries(&self) -> &[usize] {
        &self.run_boundaries
    }

    pub fn n_runs(&self) -> usize {
        self.run_boundaries.len()
    }

    pub fn run_ranges(&self) -> Vec<Range<usize>> {
        let t = self.nrows();
        self.run_boundaries
            .iter()
            .enumerate()
            .map(|(i, &start)| start..self.run_boundaries.get(i + 1).copied().unwrap_or(t))
            .collect()
    }

    pub fn run(&self, i: usize) -> ArrayView2<'_, f64> {
        let r = self.run_ranges()[i].clone();
        self.data.slice(s![r, ..])
    }

    /// Keep only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.ncols()) {
            return Err(Error::DimensionMismatch(format!(
                "column index {bad} out of range for {} columns",
                self.ncols()
            )));
        }
        self.with_data(self.data.select(Axis(1), cols))
    }
}

pub(crate) fn check_finite(a: ArrayView2<'_, f64>) -> Result<()> {
    for ((row, col), v) in a.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row, col });
        }
    }
    Ok(())
}
