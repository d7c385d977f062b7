//! Multi-target ridge regression with one penalty per target, selected by
//! exact leave-one-out cross-validation.
//!
//! The centered design is factored once, `Xc = U S Vᵀ`. For a penalty `α`
//! the fitted values are `ȳ + U diag(s²/(s²+α)) Uᵀ yc` and the hat diagonal
//! is `h_t = 1/T + Σ_j U_tj² s_j²/(s_j²+α)` (the `1/T` term accounts for
//! the unpenalized intercept). The leave-one-out residual of row `t` is then
//! `e_t / (1 - h_t)`, so the whole α grid costs one matrix product per α.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde_json::json;

use crate::data::{Container, TimeSeriesMatrix};
use crate::error::{Error, Result};
use crate::linalg::{thin_svd, ThinSvd};

/// 12 log-spaced penalties, `1e-3 ..= 1e8`.
pub fn default_alpha_grid() -> Vec<f64> {
    (-3..=8).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RidgeOptions {
    /// z-score design columns before fitting (weights are reported on the
    /// original scale).
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    /// `D × P`.
    pub weights: Array2<f64>,
    pub intercept: Array1<f64>,
    pub alpha_per_target: Vec<f64>,
    pub alpha_grid: Vec<f64>,
}

/// Leave-one-out mean squared error for every (α, target) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LooPath {
    pub alpha_grid: Vec<f64>,
    /// `n_alpha × P`.
    pub mse: Array2<f64>,
}

impl LooPath {
    /// Index of the best α per target; ties go to the larger α.
    pub fn best_indices(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.alpha_grid.len()).collect();
        order.sort_by(|&a, &b| self.alpha_grid[a].total_cmp(&self.alpha_grid[b]));
        (0..self.mse.ncols())
            .map(|p| {
                let mut best = order[0];
                for &i in &order[1..] {
                    if self.mse[[i, p]] <= self.mse[[best, p]] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

struct Prepared {
    svd: ThinSvd,
    x_mean: Array1<f64>,
    x_scale: Array1<f64>,
    y_mean: Array1<f64>,
    /// `Uᵀ · yc`, `r × P`.
    uty: Array2<f64>,
    yc: Array2<f64>,
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("alpha grid is empty".into()));
    }
    if let Some(a) = grid.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::Config(format!("alpha {a} is not a positive finite number")));
    }
    Ok(())
}

fn prepare(design: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>, opts: RidgeOptions) -> Result<Prepared> {
    let (t, d) = design.dim();
    if targets.nrows() != t {
        return Err(Error::DimensionMismatch(format!(
            "design has {t} rows, targets have {}",
            targets.nrows()
        )));
    }
    if t < 2 {
        return Err(Error::Config("ridge needs at least two rows".into()));
    }
    if let Some(((row, col), _)) = targets.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { row, col });
    }
    let x_mean = design.mean_axis(Axis(0)).expect("nonempty");
    let mut xc = &design - &x_mean;
    let x_scale = if opts.standardize {
        let sd = xc.map_axis(Axis(0), |c| (c.dot(&c) / t as f64).sqrt());
        sd.mapv(|s| if s > 0.0 { s } else { 1.0 })
    } else {
        Array1::ones(d)
    };
    xc /= &x_scale;

    let svd = thin_svd(xc.view())?;
    let tol = svd.s[0] * (t.max(d) as f64) * f64::EPSILON;
    let rank = svd.s.iter().take_while(|&&s| s > tol).count();
    if rank == 0 {
        return Err(Error::Numerical("design has rank zero after centering".into()));
    }
    let svd = ThinSvd {
        u: svd.u.slice(ndarray::s![.., ..rank]).to_owned(),
        s: svd.s.slice(ndarray::s![..rank]).to_owned(),
        vt: svd.vt.slice(ndarray::s![..rank, ..]).to_owned(),
    };
    let y_mean = targets.mean_axis(Axis(0)).expect("nonempty");
    let yc = &targets - &y_mean;
    let uty = svd.u.t().dot(&yc);
    Ok(Prepared {
        svd,
        x_mean,
        x_scale,
        y_mean,
        uty,
        yc,
    })
}

fn shrink(s: &Array1<f64>, alpha: f64) -> Array1<f64> {
    s.mapv(|v| v * v / (v * v + alpha))
}

fn loo_path(prep: &Prepared, grid: &[f64]) -> Result<LooPath> {
    let t = prep.yc.nrows();
    let u_sq = prep.svd.u.mapv(|v| v * v);
    let rows: Vec<Array1<f64>> = grid
        .par_iter()
        .map(|&alpha| {
            let f = shrink(&prep.svd.s, alpha);
            let hat = u_sq.dot(&f) + 1.0 / t as f64;
            let fitted = prep.svd.u.dot(&(&prep.uty * &f.view().insert_axis(Axis(1))));
            let resid = &prep.yc - &fitted;
            let denom = hat.mapv(|h| 1.0 - h).insert_axis(Axis(1));
            let loo = resid / &denom;
            loo.mapv(|v| v * v).mean_axis(Axis(0)).expect("nonempty")
        })
        .collect();
    let mut mse = Array2::zeros((grid.len(), prep.yc.ncols()));
    for (i, r) in rows.into_iter().enumerate() {
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "leave-one-out error is not finite at alpha {}",
                grid[i]
            )));
        }
        mse.row_mut(i).assign(&r);
    }
    Ok(LooPath {
        alpha_grid: grid.to_vec(),
        mse,
    })
}

/// Leave-one-out MSE over the α grid without selecting or refitting.
pub fn loo_mse_path(design: &TimeSeriesMatrix, targets: &TimeSeriesMatrix, alpha_grid: &[f64]) -> Result<LooPath> {
    validate_grid(alpha_grid)?;
    let prep = prepare(design.view(), targets.view(), RidgeOptions::default())?;
    loo_path(&prep, alpha_grid)
}

pub fn fit_ridge_loocv(design: &TimeSeriesMatrix, targets: &TimeSeriesMatrix, alpha_grid: &[f64]) -> Result<RidgeModel> {
    fit_ridge_loocv_with(design, targets, alpha_grid, RidgeOptions::default())
}

pub fn fit_ridge_loocv_with(
    design: &TimeSeriesMatrix,
    targets: &TimeSeriesMatrix,
    alpha_grid: &[f64],
    opts: RidgeOptions,
) -> Result<RidgeModel> {
    Ok(fit_arrays(design.view(), targets.view(), alpha_grid, opts)?.0)
}

pub(crate) fn fit_arrays(
    design: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    alpha_grid: &[f64],
    opts: RidgeOptions,
) -> Result<(RidgeModel, LooPath)> {
    validate_grid(alpha_grid)?;
    let prep = prepare(design, targets, opts)?;
    let path = loo_path(&prep, alpha_grid)?;
    let best = path.best_indices();
    let alpha_per_target: Vec<f64> = best.iter().map(|&i| alpha_grid[i]).collect();

    // coefficients in the rotated basis: s / (s² + α_p) ⊙ (Uᵀ yc)_p
    let mut coef = prep.uty.clone();
    for (p, mut col) in coef.columns_mut().into_iter().enumerate() {
        let a = alpha_per_target[p];
        for (c, &s) in col.iter_mut().zip(prep.svd.s.iter()) {
            *c *= s / (s * s + a);
        }
    }
    let mut weights = prep.svd.vt.t().dot(&coef);
    weights /= &prep.x_scale.view().insert_axis(Axis(1));
    let intercept = &prep.y_mean - &prep.x_mean.dot(&weights);
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("ridge weights are not finite".into()));
    }
    Ok((
        RidgeModel {
            weights,
            intercept,
            alpha_per_target,
            alpha_grid: alpha_grid.to_vec(),
        },
        path,
    ))
}

impl RidgeModel {
    pub fn n_features(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_targets(&self) -> usize {
        self.weights.ncols()
    }

    pub fn predict(&self, design: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
        design.with_data(self.predict_array(design.view())?)
    }

    pub fn predict_array(&self, design: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if design.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "ridge model expects {} features, got {}",
                self.n_features(),
                design.ncols()
            )));
        }
        Ok(design.dot(&self.weights) + &self.intercept)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(json!({
            "kind": "ridge",
            "n_features": self.n_features(),
            "n_targets": self.n_targets(),
        }));
        c.push("weights", self.weights.clone());
        c.push_vector("intercept", &self.intercept);
        c.push_vector("alpha_per_target", &Array1::from(self.alpha_per_target.clone()));
        c.push_vector("alpha_grid", &Array1::from(self.alpha_grid.clone()));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let m = Self {
            weights: c.get("weights")?.clone(),
            intercept: c.get_vector("intercept")?,
            alpha_per_target: c.get_vector("alpha_per_target")?.to_vec(),
            alpha_grid: c.get_vector("alpha_grid")?.to_vec(),
        };
        if m.intercept.len() != m.n_targets() || m.alpha_per_target.len() != m.n_targets() {
            return Err(Error::Container("inconsistent ridge entry shapes".into()));
        }
        Ok(m)
    }
}
