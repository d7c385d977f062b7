//! Train-then-predict chain in parcel space, plus state-label matching.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use super::{fit_hmm, predict_hmm, preprocess, HmmConfig, HmmModel, HmmPreprocessor, PredictionMode, PreprocessConfig};
use crate::data::TimeSeriesMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlhmmPipelineConfig {
    pub states: usize,
    pub preprocess: PreprocessConfig,
    pub fit: HmmConfig,
    pub mode: PredictionMode,
}

impl Default for GlhmmPipelineConfig {
    fn default() -> Self {
        Self {
            states: 3,
            preprocess: PreprocessConfig::default(),
            fit: HmmConfig::default(),
            mode: PredictionMode::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Parcel-space prediction for the dependent parcels.
    pub prediction: TimeSeriesMatrix,
    pub model: HmmModel,
    pub preprocessor: HmmPreprocessor,
}

/// Preprocess the training streams, fit, predict the test period in
/// component space, back-transform and de-standardize.
///
/// `test_x` carries either measured predictor parcels or a provider model's
/// predictions of them; it is required exactly when `train_x` is given.
/// Without predictors, `test_rows` rows are generated in one session.
pub fn predict_glhmm_pipeline(
    train_x: Option<&TimeSeriesMatrix>,
    train_y: &TimeSeriesMatrix,
    test_x: Option<&TimeSeriesMatrix>,
    test_rows: usize,
    cfg: &GlhmmPipelineConfig,
) -> Result<PipelineOutput> {
    if train_x.is_some() != test_x.is_some() {
        return Err(Error::Config("test predictors must be given iff training predictors are".into()));
    }
    if let Some(tx) = test_x {
        if tx.nrows() != test_rows {
            return Err(Error::DimensionMismatch(format!(
                "test predictors have {} rows, expected {test_rows}",
                tx.nrows()
            )));
        }
        if Some(tx.ncols()) != train_x.map(|x| x.ncols()) {
            return Err(Error::DimensionMismatch("test and training predictors differ in width".into()));
        }
    }
    let pre = preprocess(train_x, train_y, &cfg.preprocess)?;
    let model = fit_hmm(pre.x_pc.as_ref(), &pre.y_pc, cfg.states, &cfg.fit)?;
    let x_pc = test_x.map(|x| pre.preprocessor.transform_new_x(x)).transpose()?;
    let y_pc = predict_hmm(&model, test_rows, x_pc.as_ref(), cfg.mode, cfg.fit.seed)?;
    let prediction = pre.preprocessor.inverse_y_pooled(&y_pc)?;
    Ok(PipelineOutput {
        prediction,
        model,
        preprocessor: pre.preprocessor,
    })
}

/// `perm[true_label] = decoded_label` maximizing agreement. Exhaustive for
/// `k ≤ 8`, greedy on the confusion matrix beyond.
pub fn best_permutation(truth: &[usize], decoded: &[usize], k: usize) -> Vec<usize> {
    let mut confusion = vec![vec![0usize; k]; k];
    for (&t, &d) in truth.iter().zip(decoded) {
        if t < k && d < k {
            confusion[t][d] += 1;
        }
    }
    if k <= 8 {
        (0..k)
            .permutations(k)
            .max_by_key(|p| (0..k).map(|i| confusion[i][p[i]]).sum::<usize>())
            .unwrap_or_default()
    } else {
        let mut perm = vec![usize::MAX; k];
        let mut used = vec![false; k];
        let mut cells: Vec<(usize, usize, usize)> = (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .map(|(i, j)| (confusion[i][j], i, j))
            .collect();
        cells.sort_by(|a, b| b.cmp(a));
        for (_, i, j) in cells {
            if perm[i] == usize::MAX && !used[j] {
                perm[i] = j;
                used[j] = true;
            }
        }
        perm
    }
}

pub fn permutation_accuracy(truth: &[usize], decoded: &[usize], perm: &[usize]) -> f64 {
    let hits = truth.iter().zip(decoded).filter(|(&t, &d)| perm[t] == d).count();
    hits as f64 / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::pearson_per_parcel;
    use crate::hmm::synth::{planted_glhmm, PlantedGlhmmConfig};
    use crate::rng::substream;
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn permutation_matching() {
        let truth = vec![0, 0, 1, 1, 2, 2, 2];
        let decoded = vec![2, 2, 0, 0, 1, 1, 0];
        let perm = best_permutation(&truth, &decoded, 3);
        assert_eq!(perm, vec![2, 0, 1]);
        assert!((permutation_accuracy(&truth, &decoded, &perm) - 6.0 / 7.0).abs() < 1e-15);
        let big: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let shifted: Vec<usize> = big.iter().map(|&s| (s + 3) % 10).collect();
        let perm = best_permutation(&big, &shifted, 10);
        assert_eq!(permutation_accuracy(&big, &shifted, &perm), 1.0);
    }

    fn coupled(seed: u64, noise: f64) -> crate::hmm::synth::PlantedHmm {
        planted_glhmm(&PlantedGlhmmConfig {
            states: 2,
            dim_x: 20,
            dim_y: 30,
            sessions: 2,
            trs_per_session: 400,
            mean_separation: 1.0,
            beta_scale: 0.2,
            shared_beta: 1.0,
            x_rank: 5,
            noise,
            self_transition: 0.95,
            seed,
        })
    }

    fn split(m: &TimeSeriesMatrix) -> (TimeSeriesMatrix, TimeSeriesMatrix) {
        let data = m.data();
        let train = TimeSeriesMatrix::single_run(data.slice(ndarray::s![..400, ..]).to_owned()).unwrap();
        let test = TimeSeriesMatrix::single_run(data.slice(ndarray::s![400.., ..]).to_owned()).unwrap();
        (train, test)
    }

    #[test]
    fn true_predictors_carry_signal_and_noise_does_not() {
        let data = coupled(1, 0.5);
        let (x_train, x_test) = split(data.x.as_ref().unwrap());
        let (y_train, y_test) = split(&data.y);
        let cfg = GlhmmPipelineConfig {
            states: 2,
            ..Default::default()
        };
        let out = predict_glhmm_pipeline(Some(&x_train), &y_train, Some(&x_test), 400, &cfg).unwrap();
        let r = pearson_per_parcel(out.prediction.view(), y_test.view()).unwrap().mean_r;
        assert!(r >= 0.5, "true predictors: {r}");

        let mut rng = substream(2, "provider-noise");
        let noise = TimeSeriesMatrix::single_run(Array2::from_shape_simple_fn((400, 20), || rng.sample(StandardNormal))).unwrap();
        let out = predict_glhmm_pipeline(Some(&x_train), &y_train, Some(&noise), 400, &cfg).unwrap();
        let r = pearson_per_parcel(out.prediction.view(), y_test.view()).unwrap().mean_r;
        assert!(r.abs() <= 0.05, "noise predictors: {r}");
    }

    #[test]
    fn memorization_ceiling() {
        let data = planted_glhmm(&PlantedGlhmmConfig {
            states: 2,
            dim_x: 10,
            dim_y: 30,
            sessions: 2,
            trs_per_session: 300,
            mean_separation: 0.0,
            beta_scale: 0.0,
            shared_beta: 1.0,
            x_rank: 10,
            noise: 0.0,
            self_transition: 0.95,
            seed: 3,
        });
        let x = data.x.as_ref().unwrap();
        let cfg = GlhmmPipelineConfig {
            states: 2,
            ..Default::default()
        };
        let out = predict_glhmm_pipeline(Some(x), &data.y, Some(x), x.nrows(), &cfg).unwrap();
        let r = pearson_per_parcel(out.prediction.view(), data.y.view()).unwrap().mean_r;
        assert!(r >= 0.99, "{r}");
    }

    #[test]
    fn argument_checks() {
        let data = coupled(4, 0.5);
        let x = data.x.as_ref().unwrap();
        let cfg = GlhmmPipelineConfig::default();
        assert!(predict_glhmm_pipeline(Some(x), &data.y, None, 10, &cfg).is_err());
        assert!(predict_glhmm_pipeline(Some(x), &data.y, Some(x), 10, &cfg).is_err());
    }
}
