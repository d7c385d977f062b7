//! Gaussian and Gaussian-linear hidden Markov models.
//!
//! A state `k` emits `y_t ~ N(μ_k + x_t β_k, Σ_k)`; the plain Gaussian kind
//! has no `x`. Fitting is variational Bayes with conjugate priors
//! ([`fit_hmm`]); the fitted model carries posterior-weighted point
//! estimates, which drive [`forward_backward`], sampling and prediction.

mod fit;
mod inference;
mod kmeans;
mod pipeline;
mod posterior;
mod preprocess;
mod sample;
pub mod synth;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{Container, TimeSeriesMatrix};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, Spd};

pub use fit::{fit_hmm, HmmConfig, HmmPrior, COLLAPSE_THRESHOLD, COVARIANCE_RIDGE};
pub use inference::{forward_backward_log, forward_backward_scaled, Posteriors};
pub use pipeline::{best_permutation, permutation_accuracy, predict_glhmm_pipeline, GlhmmPipelineConfig};
pub use preprocess::{preprocess, HmmPreprocessor, PreprocessConfig, Preprocessed, SessionStats};
pub use sample::{predict_hmm, sample_hmm, state_marginals, PredictionMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HmmKind {
    Gaussian,
    GaussianLinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateParams {
    pub mu: Array1<f64>,
    pub sigma: Array2<f64>,
    /// `d_x × d_y`, present for the Gaussian-linear kind only.
    pub beta: Option<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    pub pi: Array1<f64>,
    pub a: Array2<f64>,
    pub states: Vec<StateParams>,
    pub kind: HmmKind,
    pub free_energy_trace: Vec<f64>,
    pub converged: bool,
    /// States whose responsibility stayed below [`COLLAPSE_THRESHOLD`].
    pub frozen_states: Vec<usize>,
}

impl HmmModel {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn dim_y(&self) -> usize {
        self.states[0].mu.len()
    }

    pub fn dim_x(&self) -> Option<usize> {
        self.states[0].beta.as_ref().map(|b| b.nrows())
    }

    /// Checks the structural invariants of a model built by hand or loaded
    /// from disk.
    pub fn validate(&self) -> Result<()> {
        let k = self.states.len();
        if k == 0 {
            return Err(Error::Config("an HMM needs at least one state".into()));
        }
        if self.pi.len() != k || self.a.dim() != (k, k) {
            return Err(Error::DimensionMismatch(format!(
                "{k} states but pi has {} entries and A is {:?}",
                self.pi.len(),
                self.a.dim()
            )));
        }
        let stochastic = |v: ndarray::ArrayView1<'_, f64>| {
            v.iter().all(|&p| p >= 0.0) && (v.sum() - 1.0).abs() <= 1e-12
        };
        if !stochastic(self.pi.view()) {
            return Err(Error::Numerical("pi is not a probability vector".into()));
        }
        if let Some(i) = self.a.rows().into_iter().position(|r| !stochastic(r)) {
            return Err(Error::Numerical(format!("row {i} of A is not a probability vector")));
        }
        let d = self.dim_y();
        let d_x = self.dim_x();
        for (i, s) in self.states.iter().enumerate() {
            if s.mu.len() != d || s.sigma.dim() != (d, d) {
                return Err(Error::DimensionMismatch(format!("state {i} has inconsistent shapes")));
            }
            match (self.kind, &s.beta) {
                (HmmKind::Gaussian, None) => {}
                (HmmKind::GaussianLinear, Some(b)) if Some(b.nrows()) == d_x && b.ncols() == d => {}
                _ => {
                    return Err(Error::DimensionMismatch(format!(
                        "state {i}: beta must be present (and d_x × d_y) iff the kind is gaussian_linear"
                    )))
                }
            }
            let asym = s
                .sigma
                .indexed_iter()
                .map(|((r, c), v)| (v - s.sigma[[c, r]]).abs())
                .fold(0.0, f64::max);
            let (eig, _) = sym_eigen(s.sigma.view());
            if asym > 1e-12 || eig[d - 1] < 1e-10 {
                return Err(Error::Numerical(format!(
                    "state {i}: covariance is not symmetric positive definite (min eigenvalue {:e})",
                    eig[d - 1]
                )));
            }
        }
        Ok(())
    }

    fn check_x<'a>(&self, x: Option<ArrayView2<'a, f64>>, rows: usize) -> Result<Option<ArrayView2<'a, f64>>> {
        match (self.kind, x) {
            (HmmKind::Gaussian, _) => Ok(None),
            (HmmKind::GaussianLinear, None) => {
                Err(Error::Config("a gaussian_linear model needs predictor x".into()))
            }
            (HmmKind::GaussianLinear, Some(x)) => {
                let d_x = self.dim_x().expect("linear kind");
                if x.dim() != (rows, d_x) {
                    return Err(Error::DimensionMismatch(format!(
                        "x is {:?}, expected ({rows}, {d_x})",
                        x.dim()
                    )));
                }
                Ok(Some(x))
            }
        }
    }

    /// Per-state emission means for every row (`K` arrays of `T × d_y`).
    pub(crate) fn emission_means(&self, x: Option<ArrayView2<'_, f64>>, rows: usize) -> Result<Vec<Array2<f64>>> {
        let x = self.check_x(x, rows)?;
        Ok(self
            .states
            .iter()
            .map(|s| {
                let mut m = Array2::zeros((rows, s.mu.len()));
                m += &s.mu;
                if let (Some(x), Some(b)) = (x, &s.beta) {
                    m += &x.dot(b);
                }
                m
            })
            .collect())
    }

    /// `log N(y_t; μ_k + x_t β_k, Σ_k)` as a `T × K` array.
    pub fn log_emissions(&self, x: Option<ArrayView2<'_, f64>>, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if y.ncols() != self.dim_y() {
            return Err(Error::DimensionMismatch(format!(
                "model emits {} channels, y has {}",
                self.dim_y(),
                y.ncols()
            )));
        }
        let means = self.emission_means(x, y.nrows())?;
        let d = self.dim_y() as f64;
        let mut out = Array2::zeros((y.nrows(), self.n_states()));
        for (k, (s, m)) in self.states.iter().zip(&means).enumerate() {
            let spd = Spd::new(s.sigma.view())?;
            let resid = &y - m;
            let white = spd.solve(resid.t()); // Σ⁻¹ rᵀ
            let maha = (&resid * &white.t()).sum_axis(Axis(1));
            let c = -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + spd.log_det());
            out.column_mut(k).assign(&maha.mapv(|q| c - 0.5 * q));
        }
        Ok(out)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(json!({
            "kind": "hmm",
            "hmm_kind": self.kind,
            "n_states": self.n_states(),
            "dim_y": self.dim_y(),
            "dim_x": self.dim_x(),
            "converged": self.converged,
            "frozen_states": self.frozen_states,
        }));
        c.push_vector("pi", &self.pi);
        c.push("A", self.a.clone());
        c.push_vector("free_energy_trace", &Array1::from(self.free_energy_trace.clone()));
        for (k, s) in self.states.iter().enumerate() {
            c.push_vector(format!("state{k}.mu"), &s.mu);
            c.push(format!("state{k}.sigma"), s.sigma.clone());
            if let Some(b) = &s.beta {
                c.push(format!("state{k}.beta"), b.clone());
            }
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let meta = c.meta();
        if meta["kind"] != "hmm" {
            return Err(Error::Container(format!("expected an hmm container, found {}", meta["kind"])));
        }
        let kind: HmmKind = serde_json::from_value(meta["hmm_kind"].clone())?;
        let k = meta["n_states"]
            .as_u64()
            .ok_or_else(|| Error::Container("missing n_states".into()))? as usize;
        let states = (0..k)
            .map(|i| {
                Ok(StateParams {
                    mu: c.get_vector(&format!("state{i}.mu"))?,
                    sigma: c.get(&format!("state{i}.sigma"))?.clone(),
                    beta: match kind {
                        HmmKind::Gaussian => None,
                        HmmKind::GaussianLinear => Some(c.get(&format!("state{i}.beta"))?.clone()),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = Self {
            pi: c.get_vector("pi")?,
            a: c.get("A")?.clone(),
            states,
            kind,
            free_energy_trace: c.get_vector("free_energy_trace")?.to_vec(),
            converged: meta["converged"].as_bool().unwrap_or(false),
            frozen_states: serde_json::from_value(meta["frozen_states"].clone()).unwrap_or_default(),
        };
        model.validate()?;
        Ok(model)
    }
}

/// State posteriors of a fitted model over the sessions of `y`.
pub fn forward_backward(model: &HmmModel, x: Option<&TimeSeriesMatrix>, y: &TimeSeriesMatrix) -> Result<Posteriors> {
    if let Some(x) = x {
        crate::alignment::target_alignment_check(x, y)?;
    }
    let log_emis = model.log_emissions(x.map(|m| m.view()), y.view())?;
    forward_backward_scaled(
        model.pi.mapv(f64::ln).view(),
        model.a.mapv(f64::ln).view(),
        log_emis.view(),
        &y.run_ranges(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_state() -> HmmModel {
        HmmModel {
            pi: array![0.6, 0.4],
            a: array![[0.9, 0.1], [0.2, 0.8]],
            states: vec![
                StateParams {
                    mu: array![0.0, 0.0],
                    sigma: array![[1.0, 0.3], [0.3, 2.0]],
                    beta: None,
                },
                StateParams {
                    mu: array![3.0, -1.0],
                    sigma: array![[0.5, 0.0], [0.0, 0.5]],
                    beta: None,
                },
            ],
            kind: HmmKind::Gaussian,
            free_energy_trace: vec![10.0, 9.0],
            converged: true,
            frozen_states: vec![],
        }
    }

    #[test]
    fn log_emission_matches_closed_form() {
        let m = two_state();
        let y = array![[0.5, -0.2]];
        let got = m.log_emissions(None, y.view()).unwrap();
        // state 1 has diagonal covariance: sum of univariate log densities
        let uni = |v: f64, mean: f64, var: f64| -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (v - mean).powi(2) / var);
        let want = uni(0.5, 3.0, 0.5) + uni(-0.2, -1.0, 0.5);
        assert!((got[[0, 1]] - want).abs() < 1e-12);
        // state 0: explicit 2×2 inverse
        let det: f64 = 2.0 - 0.09;
        let (a, b) = (0.5, -0.2);
        let q = (2.0 * a * a - 2.0 * 0.3 * a * b + b * b) / det;
        let want0 = -0.5 * (2.0 * (2.0 * std::f64::consts::PI).ln() + det.ln() + q);
        assert!((got[[0, 0]] - want0).abs() < 1e-12);
    }

    #[test]
    fn validate_rejects_bad_models() {
        assert!(two_state().validate().is_ok());
        let mut m = two_state();
        m.pi = array![0.5, 0.6];
        assert!(m.validate().is_err());
        let mut m = two_state();
        m.states[0].sigma = array![[1.0, 0.0], [0.0, 0.0]];
        assert!(m.validate().is_err());
        let mut m = two_state();
        m.states[0].beta = Some(Array2::zeros((3, 2)));
        assert!(m.validate().is_err());
    }

    #[test]
    fn container_round_trip() {
        let m = two_state();
        let back = HmmModel::from_container(&Container::from_bytes(&m.to_container().to_bytes()).unwrap()).unwrap();
        assert_eq!(back, m);

        let mut lin = two_state();
        lin.kind = HmmKind::GaussianLinear;
        for s in &mut lin.states {
            s.beta = Some(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        }
        let back = HmmModel::from_container(&Container::from_bytes(&lin.to_container().to_bytes()).unwrap()).unwrap();
        assert_eq!(back, lin);
    }

    #[test]
    fn single_state_posterior_is_trivial() {
        let m = HmmModel {
            pi: array![1.0],
            a: array![[1.0]],
            states: vec![two_state().states[0].clone()],
            kind: HmmKind::Gaussian,
            free_energy_trace: vec![],
            converged: true,
            frozen_states: vec![],
        };
        let y = TimeSeriesMatrix::single_run(array![[0.1, 0.2], [1.0, -1.0], [0.0, 3.0]]).unwrap();
        let post = forward_backward(&m, None, &y).unwrap();
        assert!(post.gamma.iter().all(|&g| (g - 1.0).abs() < 1e-15));
        let direct = m.log_emissions(None, y.view()).unwrap().sum();
        assert!((post.loglik - direct).abs() < 1e-10);
    }

    #[test]
    fn absorbing_evidence() {
        let mut m = two_state();
        m.a = Array2::eye(2);
        let y = TimeSeriesMatrix::single_run(Array2::zeros((20, 2))).unwrap();
        let post = forward_backward(&m, None, &y).unwrap();
        assert!(post.gamma.column(0).iter().all(|&g| g > 1.0 - 1e-9));
    }

    #[test]
    fn matches_enumeration_of_model() {
        let m = two_state();
        let y = array![[0.1, 0.0], [2.5, -1.2], [1.0, 0.0], [3.1, -0.7], [0.2, 0.4]];
        let ts = TimeSeriesMatrix::single_run(y.clone()).unwrap();
        let post = forward_backward(&m, None, &ts).unwrap();
        let emis = m.log_emissions(None, y.view()).unwrap();
        let mut gamma = Array2::<f64>::zeros((5, 2));
        let mut total = 0.0;
        for code in 0..32usize {
            let path: Vec<usize> = (0..5).map(|t| (code >> t) & 1).collect();
            let mut lp = m.pi[path[0]].ln() + emis[[0, path[0]]];
            for t in 1..5 {
                lp += m.a[[path[t - 1], path[t]]].ln() + emis[[t, path[t]]];
            }
            let p = lp.exp();
            total += p;
            for t in 0..5 {
                gamma[[t, path[t]]] += p;
            }
        }
        gamma /= total;
        assert!((post.loglik - total.ln()).abs() < 1e-10);
        assert!(post.gamma.iter().zip(gamma.iter()).all(|(a, b)| (a - b).abs() < 1e-10));
    }
}
