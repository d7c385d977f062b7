//! Per-parcel stacked regression over several prediction sets.
//!
//! In simplex mode each parcel solves
//! `min_w ‖y − P w‖²  s.t.  w ≥ 0, Σ w = 1`
//! with a primal active-set method on the `M × M` normal equations. Each
//! equality-constrained subproblem is solved in the sum-zero subspace with a
//! pseudo-inverse, so among tied optima the weights closest to uniform are
//! returned (two identical prediction sets get 0.5 each).

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::Container;
use crate::error::{Error, Result};
use crate::linalg::{solve_lu, sym_eigen};

const PINV_CUTOFF: f64 = 1e-12;
const UNCONSTRAINED_ALPHA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackingMode {
    #[default]
    Simplex,
    RidgeUnconstrained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackingModel {
    /// `P × M`.
    pub weights: Array2<f64>,
    pub intercept: Array1<f64>,
    pub mode: StackingMode,
    /// Parcels whose stacking truth had zero variance (uniform weights).
    pub degenerate_parcels: Vec<usize>,
}

fn check_shapes(predictions: &[ArrayView2<'_, f64>], truth: Option<ArrayView2<'_, f64>>) -> Result<(usize, usize)> {
    if predictions.len() < 2 {
        return Err(Error::Config(format!(
            "stacking needs at least 2 prediction sets, got {}",
            predictions.len()
        )));
    }
    let dim = truth.map(|t| t.dim()).unwrap_or_else(|| predictions[0].dim());
    for (m, p) in predictions.iter().enumerate() {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "prediction set {m} is {:?}, expected {:?}",
                p.dim(),
                dim
            )));
        }
    }
    Ok(dim)
}

/// Per-parcel `M`-column matrix of predictions.
fn parcel_block(predictions: &[ArrayView2<'_, f64>], p: usize) -> Array2<f64> {
    let t = predictions[0].nrows();
    let mut block = Array2::zeros((t, predictions.len()));
    for (m, pred) in predictions.iter().enumerate() {
        block.column_mut(m).assign(&pred.column(p));
    }
    block
}

pub fn fit_stacking(
    predictions: &[ArrayView2<'_, f64>],
    truth: ArrayView2<'_, f64>,
    mode: StackingMode,
) -> Result<StackingModel> {
    let (_, n_parcels) = check_shapes(predictions, Some(truth))?;
    let m = predictions.len();
    let fits: Vec<(Array1<f64>, f64, bool)> = (0..n_parcels)
        .into_par_iter()
        .map(|p| {
            let y = truth.column(p);
            let block = parcel_block(predictions, p);
            let y_mean = y.mean().expect("nonempty");
            if y.iter().all(|&v| v == y[0]) {
                return Ok((Array1::from_elem(m, 1.0 / m as f64), 0.0, true));
            }
            match mode {
                StackingMode::Simplex => {
                    let gram = block.t().dot(&block);
                    let lin = block.t().dot(&y);
                    Ok((simplex_least_squares(&gram, &lin)?, 0.0, false))
                }
                StackingMode::RidgeUnconstrained => {
                    let means = block.mean_axis(Axis(0)).expect("nonempty");
                    let centered = &block - &means;
                    let yc = y.mapv(|v| v - y_mean);
                    let gram = centered.t().dot(&centered) + Array2::<f64>::eye(m) * UNCONSTRAINED_ALPHA;
                    let w = solve_lu(gram.view(), &centered.t().dot(&yc))
                        .ok_or_else(|| Error::Numerical(format!("singular stacking system at parcel {p}")))?;
                    let b = y_mean - means.dot(&w);
                    Ok((w, b, false))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut weights = Array2::zeros((n_parcels, m));
    let mut intercept = Array1::zeros(n_parcels);
    let mut degenerate_parcels = Vec::new();
    for (p, (w, b, degenerate)) in fits.into_iter().enumerate() {
        weights.row_mut(p).assign(&w);
        intercept[p] = b;
        if degenerate {
            degenerate_parcels.push(p);
        }
    }
    Ok(StackingModel {
        weights,
        intercept,
        mode,
        degenerate_parcels,
    })
}

/// Minimize `½ wᵀ G w − cᵀ w` over the probability simplex.
pub fn simplex_least_squares(gram: &Array2<f64>, lin: &Array1<f64>) -> Result<Array1<f64>> {
    let m = lin.len();
    let mut w = Array1::from_elem(m, 1.0 / m as f64);
    let mut free = vec![true; m];

    // each pass either adds a blocking bound or releases one; the objective
    // strictly decreases between releases, so this terminates well within
    // the cap for any realistic M
    for _ in 0..(50 * m * m + 100) {
        let idx: Vec<usize> = (0..m).filter(|&i| free[i]).collect();
        let target = equality_qp(gram, lin, &idx)?;

        let mut candidate = Array1::zeros(m);
        for (k, &i) in idx.iter().enumerate() {
            candidate[i] = target[k];
        }

        if idx.iter().all(|&i| candidate[i] >= 0.0) {
            w = candidate;
            let grad = gram.dot(&w) - lin;
            let level = idx.iter().map(|&i| grad[i]).sum::<f64>() / idx.len() as f64;
            // most violated bound: gradient below the common active level
            let release = (0..m)
                .filter(|&i| !free[i])
                .map(|i| (i, grad[i] - level))
                .filter(|&(_, slack)| slack < -1e-15 * (1.0 + level.abs()))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match release {
                Some((i, _)) => free[i] = true,
                None => return Ok(w),
            }
        } else {
            let mut step = 1.0;
            let mut blocking = None;
            for &i in &idx {
                if candidate[i] < w[i] {
                    let ratio = w[i] / (w[i] - candidate[i]);
                    if ratio < step {
                        step = ratio;
                        blocking = Some(i);
                    }
                }
            }
            w = &w + &((&candidate - &w) * step);
            if let Some(i) = blocking {
                w[i] = 0.0;
                free[i] = false;
            }
            for &i in &idx {
                if w[i] < 0.0 {
                    w[i] = 0.0;
                }
            }
            let total = w.sum();
            w /= total;
        }
    }
    Err(Error::Numerical("simplex stacking solver did not converge".into()))
}

/// Solve `min ½ wᵀGw − cᵀw  s.t. Σ w = 1` over the coordinates in `idx`,
/// returning the minimizer nearest the uniform point.
fn equality_qp(g: &Array2<f64>, lin: &Array1<f64>, idx: &[usize]) -> Result<Array1<f64>> {
    let k = idx.len();
    let uniform = Array1::from_elem(k, 1.0 / k as f64);
    if k == 1 {
        return Ok(uniform);
    }
    let sub_g = Array2::from_shape_fn((k, k), |(a, b)| g[[idx[a], idx[b]]]);
    let sub_c = Array1::from_iter(idx.iter().map(|&i| lin[i]));
    let basis = sum_zero_basis(k);
    // w = uniform + N z,  (NᵀGN) z = Nᵀ(c − G·uniform)
    let reduced = basis.t().dot(&sub_g).dot(&basis);
    let rhs = basis.t().dot(&(&sub_c - &sub_g.dot(&uniform)));
    let (vals, vecs) = sym_eigen(reduced.view());
    let top = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let scale = top.max(sub_g.diag().iter().fold(0.0f64, |a, &v| a.max(v)));
    if !(scale.is_finite()) {
        return Err(Error::Numerical("non-finite stacking normal equations".into()));
    }
    let mut z = Array1::<f64>::zeros(k - 1);
    for (j, &lambda) in vals.iter().enumerate() {
        if lambda > PINV_CUTOFF * scale {
            let v = vecs.column(j);
            z = z + &(&v * (v.dot(&rhs) / lambda));
        }
    }
    Ok(uniform + basis.dot(&z))
}

/// Orthonormal (Helmert) basis of `{x : Σ x = 0}` in `k` dimensions.
fn sum_zero_basis(k: usize) -> Array2<f64> {
    let mut n = Array2::zeros((k, k - 1));
    for j in 1..k {
        let norm = ((j * (j + 1)) as f64).sqrt();
        for i in 0..j {
            n[[i, j - 1]] = 1.0 / norm;
        }
        n[[j, j - 1]] = -(j as f64) / norm;
    }
    n
}

/// Largest KKT violation of a simplex solution, relative to the data scale.
///
/// With gradient `g = G w − c`, optimality requires a common value of `g` on
/// the support and `g_i` at least that value off the support.
pub fn simplex_kkt_violation(gram: &Array2<f64>, lin: &Array1<f64>, w: &Array1<f64>) -> f64 {
    let grad = gram.dot(w) - lin;
    let scale = gram.diag().iter().fold(1e-300f64, |a, &b| a.max(b));
    let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    let level = support.iter().map(|&i| grad[i]).sum::<f64>() / support.len().max(1) as f64;
    let mut worst = (w.sum() - 1.0).abs();
    for i in 0..w.len() {
        let v = if w[i] > 0.0 {
            (grad[i] - level).abs()
        } else {
            (level - grad[i]).max(0.0)
        };
        worst = worst.max(v / scale).max((-w[i]).max(0.0));
    }
    worst
}

impl StackingModel {
    pub fn n_models(&self) -> usize {
        self.weights.ncols()
    }

    pub fn apply(&self, predictions: &[ArrayView2<'_, f64>]) -> Result<Array2<f64>> {
        let (t, p) = check_shapes(predictions, None)?;
        if predictions.len() != self.n_models() || p != self.weights.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "stacking model expects {} sets of {} parcels, got {} sets of {p}",
                self.n_models(),
                self.weights.nrows(),
                predictions.len()
            )));
        }
        let mut out = Array2::zeros((t, p));
        for (m, pred) in predictions.iter().enumerate() {
            out += &(pred * &self.weights.column(m));
        }
        out += &self.intercept;
        Ok(out)
    }

    pub fn to_container(&self, model_names: &[String]) -> Container {
        let mut c = Container::new(json!({
            "kind": "stacking",
            "mode": self.mode,
            "models": model_names,
            "degenerate_parcels": self.degenerate_parcels,
        }));
        c.push("weights", self.weights.clone());
        c.push_vector("intercept", &self.intercept);
        c
    }

    /// Returns the model and the prediction-set names in column order.
    pub fn from_container(c: &Container) -> Result<(Self, Vec<String>)> {
        let meta = c.meta();
        let mode: StackingMode = serde_json::from_value(meta["mode"].clone())?;
        let names: Vec<String> = serde_json::from_value(meta["models"].clone())?;
        let degenerate_parcels: Vec<usize> = serde_json::from_value(meta["degenerate_parcels"].clone())?;
        let model = Self {
            weights: c.get("weights")?.clone(),
            intercept: c.get_vector("intercept")?,
            mode,
            degenerate_parcels,
        };
        if names.len() != model.n_models() || model.intercept.len() != model.weights.nrows() {
            return Err(Error::Container("inconsistent stacking entry shapes".into()));
        }
        Ok((model, names))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = substream(seed, "stack-test");
        Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
    }

    fn sse(y: ArrayView2<'_, f64>, pred: &Array2<f64>, p: usize) -> f64 {
        y.column(p).iter().zip(pred.column(p)).map(|(a, b)| (a - b).powi(2)).sum()
    }

    #[test]
    fn identical_sets_get_uniform_weights() {
        let a = random(50, 3, 1);
        let truth = &a + &random(50, 3, 2);
        let m = fit_stacking(&[a.view(), a.view()], truth.view(), StackingMode::Simplex).unwrap();
        for row in m.weights.rows() {
            assert!((row[0] - 0.5).abs() < 1e-9 && (row[1] - 0.5).abs() < 1e-9, "{row}");
        }
    }

    #[test]
    fn recovers_exact_convex_combination() {
        let a = random(80, 4, 3);
        let b = random(80, 4, 4);
        let truth = &a * 0.7 + &b * 0.3;
        let m = fit_stacking(&[a.view(), b.view()], truth.view(), StackingMode::Simplex).unwrap();
        for row in m.weights.rows() {
            assert!((row[0] - 0.7).abs() < 1e-8 && (row[1] - 0.3).abs() < 1e-8, "{row}");
        }
    }

    #[test]
    fn dominant_predictor_takes_all_weight() {
        let truth = random(200, 5, 5);
        let good = &truth + &(random(200, 5, 6) * 1e-3);
        let noise = random(200, 5, 7);
        let m = fit_stacking(&[good.view(), noise.view()], truth.view(), StackingMode::Simplex).unwrap();
        for row in m.weights.rows() {
            assert!((row[0] - 1.0).abs() < 1e-3 && row[1].abs() < 1e-3, "{row}");
        }
    }

    #[test]
    fn apply_selection_and_uniform_limits() {
        let a = random(10, 3, 8);
        let b = random(10, 3, 9);
        let m = StackingModel {
            weights: Array2::from_shape_fn((3, 2), |(_, j)| if j == 0 { 1.0 } else { 0.0 }),
            intercept: Array1::zeros(3),
            mode: StackingMode::Simplex,
            degenerate_parcels: vec![],
        };
        assert_eq!(m.apply(&[a.view(), b.view()]).unwrap(), a);
        let u = StackingModel {
            weights: Array2::from_elem((3, 3), 1.0 / 3.0),
            intercept: Array1::zeros(3),
            ..m.clone()
        };
        let out = u.apply(&[a.view(), a.view(), a.view()]).unwrap();
        assert!(out.iter().zip(a.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
        assert!(m.apply(&[a.view()]).is_err());
        assert!(m.apply(&[a.view(), random(10, 2, 10).view()]).is_err());
    }

    #[test]
    fn degenerate_truth_gets_uniform_weights() {
        let a = random(30, 2, 11);
        let b = random(30, 2, 12);
        let mut truth = random(30, 2, 13);
        truth.column_mut(1).fill(4.0);
        let m = fit_stacking(&[a.view(), b.view(), b.view()], truth.view(), StackingMode::Simplex).unwrap();
        assert_eq!(m.degenerate_parcels, vec![1]);
        assert!(m.weights.row(1).iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn unconstrained_mode_fits_scale_and_offset() {
        let a = random(60, 2, 14);
        let b = random(60, 2, 15);
        let truth = &a * 2.0 - &b * 0.5 + 3.0;
        let m = fit_stacking(&[a.view(), b.view()], truth.view(), StackingMode::RidgeUnconstrained).unwrap();
        for p in 0..2 {
            assert!((m.weights[[p, 0]] - 2.0).abs() < 1e-6);
            assert!((m.weights[[p, 1]] + 0.5).abs() < 1e-6);
            assert!((m.intercept[p] - 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn needs_two_sets_and_aligned_shapes() {
        let a = random(10, 2, 16);
        assert!(fit_stacking(&[a.view()], a.view(), StackingMode::Simplex).is_err());
        let b = random(9, 2, 17);
        assert!(fit_stacking(&[a.view(), b.view()], a.view(), StackingMode::Simplex).is_err());
    }

    #[test]
    fn container_round_trip() {
        let a = random(20, 3, 18);
        let b = random(20, 3, 19);
        let m = fit_stacking(&[a.view(), b.view()], (&a + &b).view(), StackingMode::Simplex).unwrap();
        let names = vec!["x".to_string(), "y".to_string()];
        let c = Container::from_bytes(&m.to_container(&names).to_bytes()).unwrap();
        let (back, back_names) = StackingModel::from_container(&c).unwrap();
        assert_eq!(back, m);
        assert_eq!(back_names, names);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn kkt_vertex_bound_and_permutation(seed in 0u64..10_000, m in 2usize..6) {
            let truth = random(40, 2, seed);
            let preds: Vec<Array2<f64>> = (0..m)
                .map(|i| &truth * (0.2 * i as f64) + &random(40, 2, seed * 31 + i as u64 + 1))
                .collect();
            let views: Vec<_> = preds.iter().map(|p| p.view()).collect();
            let model = fit_stacking(&views, truth.view(), StackingMode::Simplex).unwrap();
            let stacked = model.apply(&views).unwrap();
            for p in 0..2 {
                let w = model.weights.row(p).to_owned();
                prop_assert!(w.iter().all(|&v| v >= 0.0));
                prop_assert!((w.sum() - 1.0).abs() < 1e-10);
                let block = parcel_block(&views, p);
                let gram = block.t().dot(&block);
                let lin = block.t().dot(&truth.column(p));
                prop_assert!(simplex_kkt_violation(&gram, &lin, &w) < 1e-8);
                let best_single = preds.iter().map(|q| sse(truth.view(), q, p)).fold(f64::INFINITY, f64::min);
                prop_assert!(sse(truth.view(), &stacked, p) <= best_single + 1e-12 * (1.0 + best_single));
            }
            let perm: Vec<usize> = (0..m).rev().collect();
            let pviews: Vec<_> = perm.iter().map(|&i| views[i]).collect();
            let pm = fit_stacking(&pviews, truth.view(), StackingMode::Simplex).unwrap();
            for (new, &old) in perm.iter().enumerate() {
                for p in 0..2 {
                    prop_assert!((pm.weights[[p, new]] - model.weights[[p, old]]).abs() < 1e-9);
                }
            }
            let pout = pm.apply(&pviews).unwrap();
            prop_assert!(pout.iter().zip(stacked.iter()).all(|(a, b)| (a - b).abs() < 1e-8));
        }
    }
}
