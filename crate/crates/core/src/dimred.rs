//! PCA fit on a strided subsample of rows.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde_json::json;

use crate::data::{Container, TimeSeriesMatrix};
use crate::error::{Error, Result};
use crate::linalg::thin_svd;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `n_comp × D`, orthonormal rows.
    pub components: Array2<f64>,
    /// Nonincreasing per-component variance of the fit subsample.
    pub explained_variance: Array1<f64>,
    /// Number of rows the model was fit on.
    pub rows_used: usize,
}

pub fn fit_pca(data: &TimeSeriesMatrix, n_comp: usize, subsample_stride: usize) -> Result<PcaModel> {
    fit_pca_array(data.view(), n_comp, subsample_stride)
}

/// Rows `0, stride, 2·stride, ...` of `data`.
pub fn subsample_rows(data: ArrayView2<'_, f64>, stride: usize) -> ArrayView2<'_, f64> {
    data.slice_move(s![..;stride, ..])
}

pub(crate) fn fit_pca_array(data: ArrayView2<'_, f64>, n_comp: usize, stride: usize) -> Result<PcaModel> {
    if stride == 0 {
        return Err(Error::Config("subsample stride must be positive".into()));
    }
    let sub = subsample_rows(data, stride);
    let (n, d) = sub.dim();
    if n_comp == 0 || n_comp > n.min(d) {
        return Err(Error::Config(format!(
            "n_comp = {n_comp} must lie in 1..={} ({n} subsampled rows, {d} columns)",
            n.min(d)
        )));
    }
    if n < 2 {
        return Err(Error::Config("PCA needs at least two subsampled rows".into()));
    }
    let mean = sub.mean_axis(Axis(0)).expect("nonempty");
    let centered = &sub - &mean;
    let scale = centered.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::Numerical("zero-variance data: all subsampled rows are identical".into()));
    }
    let svd = thin_svd(centered.view())?;
    let mut components = svd.vt.slice(s![..n_comp, ..]).to_owned();
    for mut row in components.rows_mut() {
        let pivot = row
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if pivot < 0.0 {
            row.mapv_inplace(|v| -v);
        }
    }
    let denom = (n - 1) as f64;
    let explained_variance = svd.s.slice(s![..n_comp]).mapv(|v| v * v / denom);
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        rows_used: n,
    })
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn transform(&self, data: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
        data.with_data(self.transform_array(data.view())?)
    }

    pub fn inverse_transform(&self, reduced: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
        reduced.with_data(self.inverse_transform_array(reduced.view())?)
    }

    pub fn transform_array(&self, data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if data.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "PCA expects {} columns, got {}",
                self.input_dim(),
                data.ncols()
            )));
        }
        Ok((&data - &self.mean).dot(&self.components.t()))
    }

    pub fn inverse_transform_array(&self, reduced: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if reduced.ncols() != self.n_components() {
            return Err(Error::DimensionMismatch(format!(
                "PCA has {} components, got {} columns",
                self.n_components(),
                reduced.ncols()
            )));
        }
        Ok(reduced.dot(&self.components) + &self.mean)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(json!({
            "kind": "pca",
            "n_components": self.n_components(),
            "input_dim": self.input_dim(),
            "rows_used": self.rows_used,
        }));
        c.push_vector("mean", &self.mean);
        c.push("components", self.components.clone());
        c.push_vector("explained_variance", &self.explained_variance);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let model = Self {
            mean: c.get_vector("mean")?,
            components: c.get("components")?.clone(),
            explained_variance: c.get_vector("explained_variance")?,
            rows_used: c.meta()["rows_used"].as_u64().unwrap_or(0) as usize,
        };
        if model.mean.len() != model.input_dim()
            || model.explained_variance.len() != model.n_components()
        {
            return Err(Error::Container("inconsistent PCA entry shapes".into()));
        }
        Ok(model)
    }
}
