use std::collections::BTreeSet;
use std::path::Path;

use neuroencode::alignment::{build_design, target_alignment_check, AlignmentConfig};
use neuroencode::data::{Container, TimeSeriesMatrix};
use neuroencode::dimred::{fit_pca, PcaModel};
use neuroencode::ridge::{fit_ridge_loocv, RidgeModel};
use neuroencode::{Error, Result};
use serde_json::json;

use crate::config::ModelSettings;

/// Alignment, PCA and ridge for one feature source.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingModel {
    pub name: String,
    pub alignment: AlignmentConfig,
    pub requested_n_comp: usize,
    pub fit_tags: BTreeSet<String>,
    pub pca: PcaModel,
    pub ridge: RidgeModel,
}

/// Largest usable component count not above `requested`.
pub fn effective_components(requested: usize, rows: usize, cols: usize, stride: usize) -> usize {
    let sub_rows = rows.div_ceil(stride.max(1));
    requested.min(cols).min(sub_rows).max(1)
}

impl EncodingModel {
    /// `pca_features` (when given) supplies the rows the PCA is fit on;
    /// otherwise the fit features are used.
    pub fn fit(
        name: &str,
        features: &TimeSeriesMatrix,
        pca_features: Option<&TimeSeriesMatrix>,
        bold: &TimeSeriesMatrix,
        settings: &ModelSettings,
        alpha_grid: &[f64],
        fit_tags: &BTreeSet<String>,
    ) -> Result<Self> {
        target_alignment_check(features, bold)?;
        let alignment = AlignmentConfig::new(settings.sw, settings.hrf_delay);
        let design = build_design(features, &alignment)?.matrix;
        let pca_design = match pca_features {
            Some(f) => build_design(f, &alignment)?.matrix,
            None => design.clone(),
        };
        let stride = settings.pca_subsample_stride;
        let n = effective_components(settings.n_comp, pca_design.nrows(), pca_design.ncols(), stride);
        let pca = fit_pca(&pca_design, n, stride)?;
        let reduced = pca.transform(&design)?;
        let ridge = fit_ridge_loocv(&reduced, bold, alpha_grid)?;
        Ok(Self {
            name: name.to_string(),
            alignment,
            requested_n_comp: settings.n_comp,
            fit_tags: fit_tags.clone(),
            pca,
            ridge,
        })
    }

    pub fn predict(&self, features: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
        let design = build_design(features, &self.alignment)?.matrix;
        self.ridge.predict(&self.pca.transform(&design)?)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(json!({
            "kind": "encoding_model",
            "name": self.name,
            "alignment": self.alignment,
            "requested_n_comp": self.requested_n_comp,
            "fit_tags": self.fit_tags,
        }));
        c.embed("pca", &self.pca.to_container());
        c.embed("ridge", &self.ridge.to_container());
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let meta = c.meta();
        if meta["kind"] != "encoding_model" {
            return Err(Error::Container("not an encoding model".into()));
        }
        let model = Self {
            name: serde_json::from_value(meta["name"].clone())?,
            alignment: serde_json::from_value(meta["alignment"].clone())?,
            requested_n_comp: serde_json::from_value(meta["requested_n_comp"].clone())?,
            fit_tags: serde_json::from_value(meta["fit_tags"].clone())?,
            pca: PcaModel::from_container(&c.extract("pca")?)?,
            ridge: RidgeModel::from_container(&c.extract("ridge")?)?,
        };
        if model.pca.n_components() != model.ridge.n_features() {
            return Err(Error::Container("PCA and ridge sizes disagree".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn component_clamping() {
        assert_eq!(effective_components(100, 50, 30, 1), 30);
        assert_eq!(effective_components(100, 50, 300, 5), 10);
        assert_eq!(effective_components(100, 51, 300, 5), 11);
        assert_eq!(effective_components(8, 50, 300, 1), 8);
    }

    #[test]
    fn container_round_trip() {
        let x = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let y = Array2::from_shape_fn((40, 2), |(i, j)| ((i * 5 + j) % 7) as f64);
        let features = TimeSeriesMatrix::new(x, vec![0, 20], 1.49).unwrap();
        let bold = features.with_data(y).unwrap();
        let settings = ModelSettings {
            n_comp: 4,
            ..Default::default()
        };
        let tags = BTreeSet::from(["s01".to_string()]);
        let m = EncodingModel::fit("v", &features, None, &bold, &settings, &[1.0, 10.0], &tags).unwrap();
        assert_eq!(m.pca.n_components(), 4);
        let back = EncodingModel::from_container(&Container::from_bytes(&m.to_container().to_bytes()).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.predict(&features).unwrap(), m.predict(&features).unwrap());
    }
}
