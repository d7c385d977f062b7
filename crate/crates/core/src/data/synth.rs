//! Synthetic encoding datasets with planted ground truth.
//!
//! Features are independent AR(1) processes per run. BOLD is produced by the
//! same lagged design the pipeline builds, multiplied by planted weights,
//! optionally shifted by a planted hidden-state mean sequence, plus white
//! Gaussian noise.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::matrix::{TimeSeriesMatrix, DEFAULT_TR_SECONDS};
use crate::alignment::{build_design, AlignmentConfig};
use crate::error::{Error, Result};
use crate::rng::{substream, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub dim: usize,
}

/// How planted weights distribute over parcels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    /// Every model drives every parcel with equal gain.
    #[default]
    Uniform,
    /// Parcel `p` is driven mainly by model `p mod M`; the other models
    /// contribute with the given relative gain.
    Complementary { cross_gain: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedStates {
    pub states: usize,
    /// Standard deviation of the per-state parcel offsets.
    pub separation: f64,
    pub self_transition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub runs: usize,
    pub trs_per_run: usize,
    pub models: Vec<ModelSpec>,
    pub parcels: usize,
    pub noise: f64,
    pub stimulus_window: usize,
    pub hrf_delay: usize,
    #[serde(default)]
    pub coverage: Coverage,
    pub feature_autocorrelation: f64,
    #[serde(default)]
    pub planted_states: Option<PlantedStates>,
    pub tr_seconds: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            runs: 6,
            trs_per_run: 500,
            models: vec![
                ModelSpec { name: "vision".into(), dim: 64 },
                ModelSpec { name: "audio".into(), dim: 32 },
                ModelSpec { name: "text".into(), dim: 128 },
            ],
            parcels: 100,
            noise: 1.0,
            stimulus_window: 2,
            hrf_delay: 3,
            coverage: Coverage::Uniform,
            feature_autocorrelation: 0.5,
            planted_states: None,
            tr_seconds: DEFAULT_TR_SECONDS,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("runs", self.runs),
            ("trs_per_run", self.trs_per_run),
            ("parcels", self.parcels),
            ("stimulus_window", self.stimulus_window),
            ("models", self.models.len()),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if let Some(m) = self.models.iter().find(|m| m.dim == 0) {
            return Err(Error::Config(format!("model {:?} has zero dimensions", m.name)));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Config("noise must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.feature_autocorrelation) {
            return Err(Error::Config("feature autocorrelation must lie in [0, 1)".into()));
        }
        if let Some(ps) = &self.planted_states {
            if ps.states == 0 || !(0.0..=1.0).contains(&ps.self_transition) {
                return Err(Error::Config("invalid planted state settings".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    /// Planted weights per model, `(dim · sw) × parcels`.
    #[serde(skip)]
    pub weights: BTreeMap<String, Array2<f64>>,
    pub state_sequence: Option<Vec<usize>>,
    #[serde(skip)]
    pub state_means: Option<Array2<f64>>,
    #[serde(skip)]
    pub transition: Option<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub features: BTreeMap<String, TimeSeriesMatrix>,
    pub bold: TimeSeriesMatrix,
    pub ground_truth: GroundTruth,
}

pub(crate) fn normal_matrix(rng: &mut StreamRng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = substream(cfg.seed, "synth");
    let t = cfg.runs * cfg.trs_per_run;
    let boundaries: Vec<usize> = (0..cfg.runs).map(|r| r * cfg.trs_per_run).collect();
    let align = AlignmentConfig::new(cfg.stimulus_window, cfg.hrf_delay);
    let n_models = cfg.models.len();

    let mut features = BTreeMap::new();
    let mut weights = BTreeMap::new();
    let mut signal = Array2::<f64>::zeros((t, cfg.parcels));
    let a = cfg.feature_autocorrelation;
    let innovation = (1.0 - a * a).sqrt();

    for (m_idx, spec) in cfg.models.iter().enumerate() {
        let mut x = Array2::<f64>::zeros((t, spec.dim));
        for run in 0..cfg.runs {
            let start = run * cfg.trs_per_run;
            for row in start..start + cfg.trs_per_run {
                for c in 0..spec.dim {
                    let e: f64 = rng.sample(StandardNormal);
                    x[[row, c]] = if row == start {
                        e
                    } else {
                        a * x[[row - 1, c]] + innovation * e
                    };
                }
            }
        }
        let feats = TimeSeriesMatrix::new(x, boundaries.clone(), cfg.tr_seconds)?;
        let design = build_design(&feats, &align)?;
        let width = spec.dim * cfg.stimulus_window;
        let mut w = normal_matrix(&mut rng, width, cfg.parcels, 1.0 / (width as f64).sqrt());
        if let Coverage::Complementary { cross_gain } = cfg.coverage {
            for p in 0..cfg.parcels {
                if p % n_models != m_idx {
                    w.column_mut(p).mapv_inplace(|v| v * cross_gain);
                }
            }
        }
        signal += &design.matrix.data().dot(&w);
        features.insert(spec.name.clone(), feats);
        weights.insert(spec.name.clone(), w);
    }

    let mut state_sequence = None;
    let mut state_means = None;
    let mut transition = None;
    if let Some(ps) = &cfg.planted_states {
        let k = ps.states;
        let off = if k > 1 { (1.0 - ps.self_transition) / (k - 1) as f64 } else { 0.0 };
        let trans = Array2::from_shape_fn((k, k), |(i, j)| if i == j { ps.self_transition } else { off });
        let means = normal_matrix(&mut rng, k, cfg.parcels, ps.separation);
        let z = sample_chain(&mut rng, &Array1::from_elem(k, 1.0 / k as f64), &trans, t);
        for (row, &state) in z.iter().enumerate() {
            let mut r = signal.row_mut(row);
            r += &means.row(state);
        }
        state_sequence = Some(z);
        state_means = Some(means);
        transition = Some(trans);
    }

    let noise = normal_matrix(&mut rng, t, cfg.parcels, cfg.noise);
    let bold = TimeSeriesMatrix::new(signal + noise, boundaries, cfg.tr_seconds)?;

    Ok(SynthDataset {
        features,
        bold,
        ground_truth: GroundTruth {
            config: cfg.clone(),
            weights,
            state_sequence,
            state_means,
            transition,
        },
    })
}

/// Draw a state path of length `t` from a Markov chain.
pub(crate) fn sample_chain(
    rng: &mut StreamRng,
    initial: &Array1<f64>,
    transition: &Array2<f64>,
    t: usize,
) -> Vec<usize> {
    let mut z = Vec::with_capacity(t);
    let mut state = draw_categorical(rng, initial.iter().copied());
    for _ in 0..t {
        z.push(state);
        state = draw_categorical(rng, transition.row(state).iter().copied());
    }
    z
}

pub(crate) fn draw_categorical(rng: &mut StreamRng, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}
