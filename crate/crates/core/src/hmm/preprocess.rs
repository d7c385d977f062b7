//! Per-session standardization followed by PCA, and the way back.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{Container, TimeSeriesMatrix};
use crate::dimred::{fit_pca, PcaModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Upper bound on predictor components (clamped to the data).
    pub x_components: usize,
    /// Upper bound on dependent components (clamped to the data).
    pub y_components: usize,
    pub pca_stride: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            x_components: 10,
            y_components: 100,
            pca_stride: 1,
        }
    }
}

/// Per-session channel means and (population) standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionStats {
    pub means: Vec<Array1<f64>>,
    pub stds: Vec<Array1<f64>>,
}

impl SessionStats {
    pub fn fit(m: &TimeSeriesMatrix) -> Result<Self> {
        let mut means = Vec::with_capacity(m.n_runs());
        let mut stds = Vec::with_capacity(m.n_runs());
        for s in 0..m.n_runs() {
            let run = m.run(s);
            let mean = run.mean_axis(Axis(0)).expect("nonempty run");
            let std = run.std_axis(Axis(0), 0.0);
            if let Some(channel) = std.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::ZeroVariance { session: s, channel });
            }
            means.push(mean);
            stds.push(std);
        }
        Ok(Self { means, stds })
    }

    fn check(&self, m: &TimeSeriesMatrix) -> Result<()> {
        if m.n_runs() != self.means.len() || m.ncols() != self.means[0].len() {
            return Err(Error::DimensionMismatch(format!(
                "statistics cover {} sessions × {} channels, data has {} × {}",
                self.means.len(),
                self.means[0].len(),
                m.n_runs(),
                m.ncols()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, m: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
        self.check(m)?;
        let mut out = m.data().clone();
        for (s, r) in m.run_ranges().into_iter().enumerate() {
            let mut block = out.slice_mut(ndarray::s![r, ..]);
            block -= &self.means[s];
            block /= &self.stds[s];
        }
        m.with_data(out)
    }

    pub fn invert(&self, m: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
        self.check(m)?;
        let mut out = m.data().clone();
        for (s, r) in m.run_ranges().into_iter().enumerate() {
            let mut block = out.slice_mut(ndarray::s![r, ..]);
            block *= &self.stds[s];
            block += &self.means[s];
        }
        m.with_data(out)
    }

    /// Session-averaged mean and std.
    pub fn pooled(&self) -> (Array1<f64>, Array1<f64>) {
        let n = self.means.len() as f64;
        let mean = self.means.iter().fold(Array1::zeros(self.means[0].len()), |a, b| a + b) / n;
        let std = self.stds.iter().fold(Array1::zeros(self.stds[0].len()), |a, b| a + b) / n;
        (mean, std)
    }

    fn push_into(&self, c: &mut Container, prefix: &str) {
        for (s, (m, d)) in self.means.iter().zip(&self.stds).enumerate() {
            c.push_vector(format!("{prefix}.mean{s}"), m);
            c.push_vector(format!("{prefix}.std{s}"), d);
        }
    }

    fn read_from(c: &Container, prefix: &str, sessions: usize) -> Result<Self> {
        let mut out = Self {
            means: vec![],
            stds: vec![],
        };
        for s in 0..sessions {
            out.means.push(c.get_vector(&format!("{prefix}.mean{s}"))?);
            out.stds.push(c.get_vector(&format!("{prefix}.std{s}"))?);
        }
        if sessions == 0 || out.stds.iter().flatten().any(|&v| !(v > 0.0)) {
            return Err(Error::Container(format!("invalid {prefix} session statistics")));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmPreprocessor {
    pub y_sessions: SessionStats,
    pub x_sessions: Option<SessionStats>,
    pub pca_x: Option<PcaModel>,
    pub pca_y: PcaModel,
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub x_pc: Option<TimeSeriesMatrix>,
    pub y_pc: TimeSeriesMatrix,
    pub preprocessor: HmmPreprocessor,
}

fn fit_reduced(m: &TimeSeriesMatrix, wanted: usize, stride: usize) -> Result<PcaModel> {
    if wanted == 0 || stride == 0 {
        return Err(Error::Config("component count and PCA stride must be positive".into()));
    }
    let rows = m.nrows().div_ceil(stride);
    fit_pca(m, wanted.min(m.ncols()).min(rows), stride)
}

/// Standardize each session of each stream, then reduce with PCA.
pub fn preprocess(x: Option<&TimeSeriesMatrix>, y: &TimeSeriesMatrix, cfg: &PreprocessConfig) -> Result<Preprocessed> {
    if let Some(x) = x {
        crate::alignment::target_alignment_check(x, y)?;
    }
    let y_sessions = SessionStats::fit(y)?;
    let y_std = y_sessions.apply(y)?;
    let pca_y = fit_reduced(&y_std, cfg.y_components, cfg.pca_stride)?;
    let y_pc = pca_y.transform(&y_std)?;
    let (x_sessions, pca_x, x_pc) = match x {
        Some(x) => {
            let stats = SessionStats::fit(x)?;
            let x_std = stats.apply(x)?;
            let pca = fit_reduced(&x_std, cfg.x_components, cfg.pca_stride)?;
            let pc = pca.transform(&x_std)?;
            (Some(stats), Some(pca), Some(pc))
        }
        None => (None, None, None),
    };
    Ok(Preprocessed {
        x_pc,
        y_pc,
        preprocessor: HmmPreprocessor {
            y_sessions,
            x_sessions,
            pca_x,
            pca_y,
        },
    })
}

fn pca_into(c: &mut Container, prefix: &str, p: &PcaModel) {
    c.push_vector(format!("{prefix}.mean"), &p.mean);
    c.push(format!("{prefix}.components"), p.components.clone());
    c.push_vector(format!("{prefix}.explained_variance"), &p.explained_variance);
}

fn pca_from(c: &Container, prefix: &str, rows_used: usize) -> Result<PcaModel> {
    Ok(PcaModel {
        mean: c.get_vector(&format!("{prefix}.mean"))?,
        components: c.get(&format!("{prefix}.components"))?.clone(),
        explained_variance: c.get_vector(&format!("{prefix}.explained_variance"))?,
        rows_used,
    })
}

impl HmmPreprocessor {
    /// Predictor data from new sessions: standardized with its own
    /// per-session statistics, then projected on the training components.
    pub fn transform_new_x(&self, x: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
        let pca = self
            .pca_x
            .as_ref()
            .ok_or_else(|| Error::Config("preprocessor was fit without predictors".into()))?;
        let stats = SessionStats::fit(x)?;
        pca.transform(&stats.apply(x)?)
    }

    /// Back to the original space of the training sessions.
    pub fn inverse_y(&self, y_pc: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
        self.y_sessions.invert(&self.pca_y.inverse_transform(y_pc)?)
    }

    /// Back to the original space of unseen sessions, de-standardizing with
    /// the session-averaged training statistics.
    pub fn inverse_y_pooled(&self, y_pc: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
        let std = self.pca_y.inverse_transform(y_pc)?;
        let (mean, scale) = self.y_sessions.pooled();
        let out: Array2<f64> = std.data() * &scale + &mean;
        y_pc.with_data(out)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(json!({
            "kind": "hmm_preprocessor",
            "y_sessions": self.y_sessions.means.len(),
            "x_sessions": self.x_sessions.as_ref().map(|s| s.means.len()),
            "pca_y_rows_used": self.pca_y.rows_used,
            "pca_x_rows_used": self.pca_x.as_ref().map(|p| p.rows_used),
        }));
        self.y_sessions.push_into(&mut c, "y");
        pca_into(&mut c, "pca_y", &self.pca_y);
        if let (Some(s), Some(p)) = (&self.x_sessions, &self.pca_x) {
            s.push_into(&mut c, "x");
            pca_into(&mut c, "pca_x", p);
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let meta = c.meta();
        if meta["kind"] != "hmm_preprocessor" {
            return Err(Error::Container(format!(
                "expected an hmm_preprocessor container, found {}",
                meta["kind"]
            )));
        }
        let count = |key: &str| meta[key].as_u64().map(|v| v as usize);
        let y_n = count("y_sessions").ok_or_else(|| Error::Container("missing y_sessions".into()))?;
        let (x_sessions, pca_x) = match count("x_sessions") {
            Some(n) => (
                Some(SessionStats::read_from(c, "x", n)?),
                Some(pca_from(c, "pca_x", count("pca_x_rows_used").unwrap_or(0))?),
            ),
            None => (None, None),
        };
        Ok(Self {
            y_sessions: SessionStats::read_from(c, "y", y_n)?,
            x_sessions,
            pca_x,
            pca_y: pca_from(c, "pca_y", count("pca_y_rows_used").unwrap_or(0))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = substream(seed, "prep-test");
        Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
    }

    #[test]
    fn single_session_is_standardized() {
        let y = TimeSeriesMatrix::single_run(random(80, 5, 1) * 3.0 + 7.0).unwrap();
        let stats = SessionStats::fit(&y).unwrap();
        let s = stats.apply(&y).unwrap();
        for c in s.data().columns() {
            assert!(c.mean().unwrap().abs() <= 1e-12);
            assert!((c.std(0.0) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn sessions_are_standardized_independently() {
        let mut a = random(60, 3, 2);
        a.slice_mut(ndarray::s![30.., ..]).mapv_inplace(|v| 5.0 * v + 100.0);
        let y = TimeSeriesMatrix::new(a, vec![0, 30], 1.49).unwrap();
        let s = SessionStats::fit(&y).unwrap().apply(&y).unwrap();
        for r in 0..2 {
            for c in s.run(r).columns() {
                assert!(c.mean().unwrap().abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_variance_channel_is_rejected() {
        let mut a = random(20, 3, 3);
        a.slice_mut(ndarray::s![10.., 2]).fill(4.0);
        let y = TimeSeriesMatrix::new(a, vec![0, 10], 1.49).unwrap();
        assert!(matches!(
            SessionStats::fit(&y),
            Err(Error::ZeroVariance { session: 1, channel: 2 })
        ));
    }

    #[test]
    fn full_rank_round_trip() {
        let y = TimeSeriesMatrix::new(random(300, 100, 4) * 2.0 + 1.0, vec![0, 150], 1.49).unwrap();
        let p = preprocess(None, &y, &PreprocessConfig::default()).unwrap();
        assert_eq!(p.y_pc.ncols(), 100);
        let back = p.preprocessor.inverse_y(&p.y_pc).unwrap();
        let err = (back.data() - y.data()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn component_counts_are_clamped() {
        let y = TimeSeriesMatrix::single_run(random(50, 8, 5)).unwrap();
        let x = TimeSeriesMatrix::single_run(random(50, 4, 6)).unwrap();
        let p = preprocess(Some(&x), &y, &PreprocessConfig::default()).unwrap();
        assert_eq!(p.y_pc.ncols(), 8);
        assert_eq!(p.x_pc.as_ref().unwrap().ncols(), 4);
        let cfg = PreprocessConfig {
            x_components: 2,
            y_components: 3,
            pca_stride: 1,
        };
        let p = preprocess(Some(&x), &y, &cfg).unwrap();
        assert_eq!((p.x_pc.unwrap().ncols(), p.y_pc.ncols()), (2, 3));
    }

    #[test]
    fn container_round_trip() {
        let y = TimeSeriesMatrix::new(random(40, 6, 7), vec![0, 20], 1.49).unwrap();
        let x = TimeSeriesMatrix::new(random(40, 5, 8), vec![0, 20], 1.49).unwrap();
        let p = preprocess(Some(&x), &y, &PreprocessConfig::default()).unwrap().preprocessor;
        let back = HmmPreprocessor::from_container(&Container::from_bytes(&p.to_container().to_bytes()).unwrap()).unwrap();
        assert_eq!(back, p);
        let no_x = preprocess(None, &y, &PreprocessConfig::default()).unwrap().preprocessor;
        let back = HmmPreprocessor::from_container(&Container::from_bytes(&no_x.to_container().to_bytes()).unwrap()).unwrap();
        assert_eq!(back, no_x);
    }

    #[test]
    fn pooled_inverse_uses_averaged_statistics() {
        let mut a = random(40, 2, 9);
        a.slice_mut(ndarray::s![20.., ..]).mapv_inplace(|v| 3.0 * v + 10.0);
        let y = TimeSeriesMatrix::new(a, vec![0, 20], 1.49).unwrap();
        let p = preprocess(None, &y, &PreprocessConfig::default()).unwrap();
        let zero = TimeSeriesMatrix::single_run(Array2::zeros((1, 2))).unwrap();
        let out = p.preprocessor.inverse_y_pooled(&p.preprocessor.pca_y.transform(&zero).unwrap()).unwrap();
        // a zero standardized row maps to the averaged session mean
        let pca_zero = p.preprocessor.pca_y.inverse_transform(&p.preprocessor.pca_y.transform(&zero).unwrap()).unwrap();
        let (mean, std) = p.preprocessor.y_sessions.pooled();
        let want = pca_zero.data() * &std + &mean;
        assert!((out.data() - &want).iter().all(|v| v.abs() < 1e-12));
    }
}
