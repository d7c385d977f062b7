//! Generating output from a fitted model without observing `y`.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::HmmModel;
use crate::data::synth::sample_chain;
use crate::data::TimeSeriesMatrix;
use crate::error::{Error, Result};
use crate::linalg::Spd;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// `Σ_k p(z_t = k) · (μ_k + x_t β_k)` with prior state marginals.
    #[default]
    Expectation,
    /// One draw of states and emissions.
    Sample,
}

/// `p(z_t)` for `t` steps of a chain started from π.
pub fn state_marginals(model: &HmmModel, t: usize) -> Array2<f64> {
    let mut out = Array2::zeros((t, model.n_states()));
    let mut p = model.pi.clone();
    for row in 0..t {
        out.row_mut(row).assign(&p);
        p = p.dot(&model.a);
    }
    out
}

fn segmentation(t: usize, x: Option<&TimeSeriesMatrix>) -> Result<Vec<std::ops::Range<usize>>> {
    if t == 0 {
        return Err(Error::Config("cannot generate zero rows".into()));
    }
    match x {
        Some(x) if x.nrows() != t => Err(Error::DimensionMismatch(format!(
            "asked for {t} rows but x has {}",
            x.nrows()
        ))),
        Some(x) => Ok(x.run_ranges()),
        None => Ok(vec![0..t]),
    }
}

fn wrap(data: Array2<f64>, x: Option<&TimeSeriesMatrix>) -> Result<TimeSeriesMatrix> {
    match x {
        Some(x) => x.with_data(data),
        None => TimeSeriesMatrix::single_run(data),
    }
}

/// Draw `t` rows from the model. Each run of `x` (or the whole output when
/// `x` is absent) starts a fresh chain from π.
pub fn sample_hmm(model: &HmmModel, t: usize, x: Option<&TimeSeriesMatrix>, seed: u64) -> Result<TimeSeriesMatrix> {
    predict_hmm(model, t, x, PredictionMode::Sample, seed)
}

pub fn predict_hmm(
    model: &HmmModel,
    t: usize,
    x: Option<&TimeSeriesMatrix>,
    mode: PredictionMode,
    seed: u64,
) -> Result<TimeSeriesMatrix> {
    let sessions = segmentation(t, x)?;
    let xv: Option<ArrayView2<'_, f64>> = x.map(|m| m.view());
    let means = model.emission_means(xv, t)?;
    let d = model.dim_y();
    let mut out = Array2::<f64>::zeros((t, d));
    match mode {
        PredictionMode::Expectation => {
            for r in &sessions {
                let marg = state_marginals(model, r.len());
                for (i, row) in r.clone().enumerate() {
                    let mut acc = Array1::<f64>::zeros(d);
                    for (k, m) in means.iter().enumerate() {
                        acc.scaled_add(marg[[i, k]], &m.row(row));
                    }
                    out.row_mut(row).assign(&acc);
                }
            }
        }
        PredictionMode::Sample => {
            let chol: Vec<Array2<f64>> = model
                .states
                .iter()
                .map(|s| Ok(Spd::new(s.sigma.view())?.lower()))
                .collect::<Result<_>>()?;
            let mut rng = substream(seed, "hmm");
            for r in &sessions {
                let path = sample_chain(&mut rng, &model.pi, &model.a, r.len());
                for (row, &k) in r.clone().zip(&path) {
                    let e = Array1::from_shape_simple_fn(d, || rng.sample::<f64, _>(StandardNormal));
                    out.row_mut(row).assign(&(&means[k].row(row) + &chol[k].dot(&e)));
                }
            }
        }
    }
    wrap(out, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::{HmmKind, StateParams};
    use ndarray::array;

    fn single(mu: Array1<f64>, sigma: Array2<f64>, beta: Option<Array2<f64>>) -> HmmModel {
        let kind = if beta.is_some() { HmmKind::GaussianLinear } else { HmmKind::Gaussian };
        HmmModel {
            pi: array![1.0],
            a: array![[1.0]],
            states: vec![StateParams { mu, sigma, beta }],
            kind,
            free_energy_trace: vec![],
            converged: true,
            frozen_states: vec![],
        }
    }

    #[test]
    fn degenerate_emission_returns_mean() {
        let m = single(array![1.0, -2.0, 3.0], Array2::eye(3) * 1e-10, None);
        let out = sample_hmm(&m, 100, None, 4).unwrap();
        assert!(out.data().rows().into_iter().all(|r| (&r - &m.states[0].mu).iter().all(|v| v.abs() < 1e-4)));
    }

    #[test]
    fn identity_regression_in_expectation() {
        let m = single(Array1::zeros(3), Array2::eye(3), Some(Array2::eye(3)));
        let x = TimeSeriesMatrix::new(
            Array2::from_shape_fn((10, 3), |(i, j)| (i * 3 + j) as f64 * 0.1 - 1.0),
            vec![0, 4],
            1.49,
        )
        .unwrap();
        let out = predict_hmm(&m, 10, Some(&x), PredictionMode::Expectation, 0).unwrap();
        assert_eq!(out.data(), x.data());
        assert_eq!(out.run_boundaries(), x.run_boundaries());
    }

    #[test]
    fn transition_frequencies_match() {
        let mut m = single(Array1::zeros(1), Array2::eye(1), None);
        m.pi = array![0.2, 0.5, 0.3];
        m.a = array![[0.8, 0.15, 0.05], [0.1, 0.7, 0.2], [0.3, 0.3, 0.4]];
        m.states = (0..3)
            .map(|k| StateParams {
                mu: array![10.0 * k as f64],
                sigma: array![[1e-6]],
                beta: None,
            })
            .collect();
        // states are read back from the well-separated emissions
        let y = sample_hmm(&m, 100_000, None, 1).unwrap();
        let path: Vec<usize> = y.data().column(0).iter().map(|v| (v / 10.0).round() as usize).collect();
        let mut counts = Array2::<f64>::zeros((3, 3));
        for w in path.windows(2) {
            counts[[w[0], w[1]]] += 1.0;
        }
        for i in 0..3 {
            let total = counts.row(i).sum();
            for j in 0..3 {
                assert!((counts[[i, j]] / total - m.a[[i, j]]).abs() < 0.01);
            }
        }
    }

    #[test]
    fn marginals_follow_the_chain() {
        let mut m = single(Array1::zeros(1), Array2::eye(1), None);
        m.pi = array![1.0, 0.0];
        m.a = array![[0.5, 0.5], [0.0, 1.0]];
        m.states = vec![m.states[0].clone(); 2];
        let p = state_marginals(&m, 3);
        assert_eq!(p, array![[1.0, 0.0], [0.5, 0.5], [0.25, 0.75]]);
    }

    #[test]
    fn deterministic_and_checked() {
        let m = single(array![0.0, 0.0], array![[1.0, 0.5], [0.5, 1.0]], None);
        assert_eq!(sample_hmm(&m, 20, None, 3).unwrap(), sample_hmm(&m, 20, None, 3).unwrap());
        assert_ne!(sample_hmm(&m, 20, None, 3).unwrap(), sample_hmm(&m, 20, None, 4).unwrap());
        let lin = single(Array1::zeros(2), Array2::eye(2), Some(Array2::eye(2)));
        assert!(sample_hmm(&lin, 5, None, 0).is_err());
        assert!(sample_hmm(&m, 0, None, 0).is_err());
    }
}
