//! Planted HMM data for recovery checks.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::synth::{normal_matrix, sample_chain};
use crate::data::TimeSeriesMatrix;
use crate::rng::substream;

#[derive(Debug, Clone)]
pub struct PlantedHmm {
    pub x: Option<TimeSeriesMatrix>,
    pub y: TimeSeriesMatrix,
    pub states: Vec<usize>,
    pub initial: Array1<f64>,
    pub transition: Array2<f64>,
    pub means: Array2<f64>,
    /// Per-state `d_x × d_y` coupling (empty for the plain Gaussian kind).
    pub betas: Vec<Array2<f64>>,
    pub noise: f64,
}

/// Transition matrix with `self_transition` on the diagonal and the rest
/// spread evenly.
pub fn sticky_transition(k: usize, self_transition: f64) -> Array2<f64> {
    if k == 1 {
        return Array2::ones((1, 1));
    }
    let off = (1.0 - self_transition) / (k - 1) as f64;
    Array2::from_shape_fn((k, k), |(i, j)| if i == j { self_transition } else { off })
}

/// State means on scaled coordinate axes (`separation · e_{k mod d}`, sign
/// alternating once the axes are used up), unit isotropic noise.
fn spread_means(k: usize, d: usize, separation: f64) -> Array2<f64> {
    Array2::from_shape_fn((k, d), |(s, j)| {
        let sign = if (s / d) % 2 == 0 { 1.0 } else { -1.0 };
        if s % d == j {
            sign * separation
        } else {
            0.0
        }
    })
}

/// Gaussian HMM: `k` states with means `separation` apart along coordinate
/// axes and unit noise, one session of `t` rows.
pub fn planted_gaussian(k: usize, t: usize, d: usize, separation: f64, self_transition: f64, seed: u64) -> PlantedHmm {
    let mut rng = substream(seed, "hmm-synth");
    let transition = sticky_transition(k, self_transition);
    let initial = Array1::from_elem(k, 1.0 / k as f64);
    let states = sample_chain(&mut rng, &initial, &transition, t);
    let means = spread_means(k, d, separation);
    let mut y = normal_matrix(&mut rng, t, d, 1.0);
    for (row, &s) in states.iter().enumerate() {
        y.row_mut(row).scaled_add(1.0, &means.row(s));
    }
    PlantedHmm {
        x: None,
        y: TimeSeriesMatrix::single_run(y).expect("finite"),
        states,
        initial,
        transition,
        means,
        betas: vec![],
        noise: 1.0,
    }
}

/// Settings of a planted Gaussian-linear HMM.
#[derive(Debug, Clone)]
pub struct PlantedGlhmmConfig {
    pub states: usize,
    pub dim_x: usize,
    pub dim_y: usize,
    pub sessions: usize,
    pub trs_per_session: usize,
    pub mean_separation: f64,
    pub beta_scale: f64,
    /// Weight of a coupling component common to all states.
    pub shared_beta: f64,
    /// Rank of the predictor series; below `dim_x` the predictors are a
    /// random mixture of this many sources plus 10% noise.
    pub x_rank: usize,
    pub noise: f64,
    pub self_transition: f64,
    pub seed: u64,
}

impl Default for PlantedGlhmmConfig {
    fn default() -> Self {
        Self {
            states: 3,
            dim_x: 10,
            dim_y: 100,
            sessions: 2,
            trs_per_session: 1000,
            mean_separation: 3.0,
            beta_scale: 1.0,
            shared_beta: 0.0,
            x_rank: 10,
            noise: 1.0,
            self_transition: 0.95,
            seed: 0,
        }
    }
}

/// `y_t = μ_{z_t} + x_t β_{z_t} + noise`.
pub fn planted_glhmm(cfg: &PlantedGlhmmConfig) -> PlantedHmm {
    let mut rng = substream(cfg.seed, "glhmm-synth");
    let k = cfg.states;
    let transition = sticky_transition(k, cfg.self_transition);
    let initial = Array1::from_elem(k, 1.0 / k as f64);
    let means = spread_means(k, cfg.dim_y, cfg.mean_separation);
    let shared = normal_matrix(&mut rng, cfg.dim_x, cfg.dim_y, cfg.shared_beta);
    let betas: Vec<Array2<f64>> = (0..k)
        .map(|_| &shared + &normal_matrix(&mut rng, cfg.dim_x, cfg.dim_y, cfg.beta_scale))
        .collect();
    let t = cfg.sessions * cfg.trs_per_session;
    let mut states = Vec::with_capacity(t);
    for _ in 0..cfg.sessions {
        states.extend(sample_chain(&mut rng, &initial, &transition, cfg.trs_per_session));
    }
    let x = if cfg.x_rank < cfg.dim_x {
        let sources = normal_matrix(&mut rng, t, cfg.x_rank, 1.0);
        let mix = normal_matrix(&mut rng, cfg.x_rank, cfg.dim_x, 1.0 / (cfg.x_rank as f64).sqrt());
        sources.dot(&mix) + normal_matrix(&mut rng, t, cfg.dim_x, 0.1)
    } else {
        normal_matrix(&mut rng, t, cfg.dim_x, 1.0)
    };
    let mut y = Array2::<f64>::zeros((t, cfg.dim_y));
    for (row, &s) in states.iter().enumerate() {
        let mut r = x.row(row).dot(&betas[s]) + means.row(s);
        r.mapv_inplace(|v| v + cfg.noise * rng.sample::<f64, _>(StandardNormal));
        y.row_mut(row).assign(&r);
    }
    let bounds: Vec<usize> = (0..cfg.sessions).map(|s| s * cfg.trs_per_session).collect();
    let tr = crate::data::DEFAULT_TR_SECONDS;
    PlantedHmm {
        x: Some(TimeSeriesMatrix::new(x, bounds.clone(), tr).expect("finite")),
        y: TimeSeriesMatrix::new(y, bounds, tr).expect("finite"),
        states,
        initial,
        transition,
        means,
        betas,
        noise: cfg.noise,
    }
}
