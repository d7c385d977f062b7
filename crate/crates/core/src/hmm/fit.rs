//! Variational Bayes fitting.

use std::ops::Range;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inference::{chain_stats, ChainStats};
use super::kmeans::{kmeans, one_hot};
use super::posterior::{dirichlet_expected_log, dirichlet_kl, weighted_stats, Mniw};
use super::{HmmKind, HmmModel, StateParams};
use crate::data::TimeSeriesMatrix;
use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use crate::rng::substream;

/// Added to the diagonal of every reported covariance.
pub const COVARIANCE_RIDGE: f64 = 1e-6;
/// A state whose summed responsibility falls below this has collapsed.
pub const COLLAPSE_THRESHOLD: f64 = 1e-8;

/// Conjugate prior settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmmPrior {
    /// Dirichlet concentration on π and on each row of A.
    pub dirichlet: f64,
    /// Prior precision scale of `[μ; β]` (in units of Σ).
    pub mean_precision: f64,
    /// Prior covariance scale as a fraction of the average residual variance.
    pub covariance_fraction: f64,
    /// Inverse-Wishart degrees of freedom above `d_y`.
    pub dof_offset: f64,
    /// Self-transition share of the initial transition pseudo-counts.
    pub initial_self_transition: f64,
}

impl Default for HmmPrior {
    fn default() -> Self {
        Self {
            dirichlet: 1.0,
            mean_precision: 1e-3,
            covariance_fraction: 0.1,
            dof_offset: 2.0,
            initial_self_transition: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmmConfig {
    pub max_iter: usize,
    /// Stop when the free-energy decrease is below `tol · |F|`.
    pub tol: f64,
    pub seed: u64,
    pub kmeans_restarts: usize,
    pub prior: HmmPrior,
}

impl Default for HmmConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-5,
            seed: 0,
            kmeans_restarts: 10,
            prior: HmmPrior::default(),
        }
    }
}

struct Problem<'a> {
    z: Array2<f64>,
    y: ArrayView2<'a, f64>,
    sessions: Vec<Range<usize>>,
    k: usize,
    pi_prior: Array1<f64>,
    a_prior: Array2<f64>,
    emis_prior: Mniw,
}

struct Posterior {
    pi: Array1<f64>,
    a: Array2<f64>,
    emis: Vec<Mniw>,
}

struct Evaluation {
    chain: ChainStats,
    log_emis: Array2<f64>,
    free_energy: f64,
}

/// Design `[1 | x]`.
fn design(x: Option<ArrayView2<'_, f64>>, rows: usize) -> Array2<f64> {
    let ones = Array2::ones((rows, 1));
    match x {
        Some(x) => concatenate![Axis(1), ones, x],
        None => ones,
    }
}

/// Minimum-norm solution of `G W = B` for symmetric PSD `G`.
fn pinv_solve(g: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let (vals, vecs) = sym_eigen(g);
    let cutoff = vals[0].abs() * 1e-12;
    let proj = vecs.t().dot(&b);
    let mut scaled = Array2::zeros(proj.dim());
    for (i, &v) in vals.iter().enumerate() {
        if v > cutoff {
            scaled.row_mut(i).assign(&(&proj.row(i) / v));
        }
    }
    vecs.dot(&scaled)
}

impl Problem<'_> {
    fn emissions(&self, gamma: ArrayView2<'_, f64>) -> Result<Vec<Mniw>> {
        (0..self.k)
            .into_par_iter()
            .map(|k| Mniw::update(&self.emis_prior, &weighted_stats(self.z.view(), self.y, gamma.column(k))))
            .collect()
    }

    fn m_step(&self, gamma: ArrayView2<'_, f64>, chain: &ChainStats) -> Result<Posterior> {
        Ok(Posterior {
            pi: &self.pi_prior + &chain.initial,
            a: &self.a_prior + &chain.transitions,
            emis: self.emissions(gamma)?,
        })
    }

    fn e_step(&self, q: &Posterior) -> Result<Evaluation> {
        let cols: Vec<Array1<f64>> = q
            .emis
            .par_iter()
            .map(|e| e.expected_loglik(self.z.view(), self.y))
            .collect();
        let mut log_emis = Array2::zeros((self.y.nrows(), self.k));
        for (k, c) in cols.iter().enumerate() {
            log_emis.column_mut(k).assign(c);
        }
        let log_pi = dirichlet_expected_log(q.pi.view());
        let mut log_a = Array2::zeros((self.k, self.k));
        for (i, row) in q.a.rows().into_iter().enumerate() {
            log_a.row_mut(i).assign(&dirichlet_expected_log(row));
        }
        let chain = chain_stats(log_pi.view(), log_a.view(), log_emis.view(), &self.sessions)?;

        let kl_pi = dirichlet_kl(q.pi.view(), self.pi_prior.view());
        let kl_a: f64 = (0..self.k)
            .map(|i| dirichlet_kl(q.a.row(i), self.a_prior.row(i)))
            .sum();
        let kl_emis: f64 = q.emis.iter().map(|e| e.kl(&self.emis_prior)).sum();
        let free_energy = -chain.log_norm + kl_pi + kl_a + kl_emis;
        if !free_energy.is_finite() {
            return Err(Error::Numerical("free energy is not finite".into()));
        }
        Ok(Evaluation {
            chain,
            log_emis,
            free_energy,
        })
    }

    fn initial_posterior(&self, labels: &[usize], self_share: f64) -> Result<Posterior> {
        let k = self.k;
        let gamma = one_hot(labels, k);
        let counts = gamma.sum_axis(Axis(0));
        let mut a = self.a_prior.clone();
        for i in 0..k {
            for j in 0..k {
                let share = if k == 1 {
                    1.0
                } else if i == j {
                    self_share
                } else {
                    (1.0 - self_share) / (k - 1) as f64
                };
                a[[i, j]] += counts[i] * share;
            }
        }
        Ok(Posterior {
            pi: &self.pi_prior + self.sessions.len() as f64 / k as f64,
            a,
            emis: self.emissions(gamma.view())?,
        })
    }

    /// Rows with the poorest best-state fit, handed to a collapsed state.
    fn reinit_gamma(&self, gamma: &Array2<f64>, log_emis: &Array2<f64>, state: usize) -> Array2<f64> {
        let t = gamma.nrows();
        let fit: Vec<f64> = log_emis
            .rows()
            .into_iter()
            .map(|r| r.fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
            .collect();
        let mut order: Vec<usize> = (0..t).collect();
        order.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)));
        let take = (t / (2 * self.k)).max(self.z.ncols() + 1).min(t);
        let mut g = gamma.clone();
        for &row in &order[..take] {
            g.row_mut(row).fill(0.0);
            g[[row, state]] = 1.0;
        }
        g
    }

    fn point_estimates(&self, gamma: ArrayView2<'_, f64>, kind: HmmKind) -> Vec<StateParams> {
        let d = self.y.ncols();
        let prior_cov = &self.emis_prior.psi / (self.emis_prior.nu - d as f64 - 1.0);
        (0..self.k)
            .into_par_iter()
            .map(|k| {
                let w = gamma.column(k);
                let s = weighted_stats(self.z.view(), self.y, w);
                let (coef, mut sigma) = if s.weight < COLLAPSE_THRESHOLD {
                    (Array2::zeros((self.z.ncols(), d)), prior_cov.clone())
                } else {
                    let coef = pinv_solve(s.zz.view(), s.zy.view());
                    let resid = &self.y - &self.z.dot(&coef);
                    let weighted = &resid * &w.insert_axis(Axis(1));
                    let mut sigma = weighted.t().dot(&resid) / s.weight;
                    crate::linalg::symmetrize(&mut sigma);
                    (coef, sigma)
                };
                for i in 0..d {
                    sigma[[i, i]] += COVARIANCE_RIDGE;
                }
                StateParams {
                    mu: coef.row(0).to_owned(),
                    sigma,
                    beta: match kind {
                        HmmKind::Gaussian => None,
                        HmmKind::GaussianLinear => Some(coef.slice(s![1.., ..]).to_owned()),
                    },
                }
            })
            .collect()
    }
}

/// k-means input: pooled residuals, followed (with predictors) by the
/// row-wise products of standardized predictors and residuals, whose
/// expectation within a state is proportional to that state's departure
/// from the pooled coupling.
fn init_features(x: Option<ArrayView2<'_, f64>>, resid: &Array2<f64>) -> Array2<f64> {
    let Some(x) = x else {
        return resid.clone();
    };
    let (t, d) = resid.dim();
    let mean = x.mean_axis(Axis(0)).expect("nonempty");
    let std = x.std_axis(Axis(0), 0.0);
    let xs = Array2::from_shape_fn(x.dim(), |(i, j)| if std[j] > 0.0 { (x[[i, j]] - mean[j]) / std[j] } else { 0.0 });
    let mut out = Array2::zeros((t, d * (1 + x.ncols())));
    for i in 0..t {
        let mut row = out.row_mut(i);
        row.slice_mut(s![..d]).assign(&resid.row(i));
        for j in 0..x.ncols() {
            row.slice_mut(s![d * (1 + j)..d * (2 + j)]).assign(&(&resid.row(i) * xs[[i, j]]));
        }
    }
    out
}

/// Fit a `k`-state HMM to `y`, Gaussian-linear in `x` when `x` is given.
///
/// Each session (run) of `y` is an independent chain started from π. The
/// returned model's `free_energy_trace` holds one entry per iteration.
pub fn fit_hmm(x: Option<&TimeSeriesMatrix>, y: &TimeSeriesMatrix, k: usize, cfg: &HmmConfig) -> Result<HmmModel> {
    let t = y.nrows();
    if k == 0 || k > t {
        return Err(Error::Config(format!("K = {k} must lie in 1..={t}")));
    }
    if cfg.max_iter == 0 || !(cfg.tol >= 0.0) {
        return Err(Error::Config("max_iter must be positive and tol nonnegative".into()));
    }
    let p = &cfg.prior;
    if !(p.dirichlet > 0.0 && p.mean_precision > 0.0 && p.covariance_fraction > 0.0 && p.dof_offset > 1.0)
        || !(0.0..=1.0).contains(&p.initial_self_transition)
    {
        return Err(Error::Config("invalid HMM prior settings".into()));
    }
    if let Some(x) = x {
        crate::alignment::target_alignment_check(x, y)?;
    }
    let kind = if x.is_some() { HmmKind::GaussianLinear } else { HmmKind::Gaussian };
    let z = design(x.map(|m| m.view()), t);
    let d = y.ncols();

    // pooled regression residuals: basis of the k-means input and prior covariance scale
    let pooled = pinv_solve(z.t().dot(&z).view(), z.t().dot(&y.view()).view());
    let resid = &y.view() - &z.dot(&pooled);
    let avg_var = resid.mapv(|v| v * v).sum() / (t * d) as f64;
    let psi_scale = (p.covariance_fraction * avg_var).max(1e-12);

    let problem = Problem {
        sessions: y.run_ranges(),
        k,
        pi_prior: Array1::from_elem(k, p.dirichlet),
        a_prior: Array2::from_elem((k, k), p.dirichlet),
        emis_prior: Mniw::prior(z.ncols(), d, p.mean_precision, psi_scale, d as f64 + p.dof_offset),
        z,
        y: y.view(),
    };

    let mut rng = substream(cfg.seed, "init");
    let labels = kmeans(init_features(x.map(|m| m.view()), &resid).view(), k, cfg.kmeans_restarts, &mut rng);
    let initial = problem.initial_posterior(&labels, p.initial_self_transition)?;
    let mut eval = problem.e_step(&initial)?;
    let mut trace = vec![eval.free_energy];
    let mut reinit_used = vec![false; k];
    let mut converged = false;

    for _ in 1..cfg.max_iter {
        let previous = eval.free_energy;
        let next_q = problem.m_step(eval.chain.gamma.view(), &eval.chain)?;
        let mut next = problem.e_step(&next_q)?;

        let collapsed: Vec<usize> = (0..k)
            .filter(|&s| !reinit_used[s] && eval.chain.gamma.column(s).sum() < COLLAPSE_THRESHOLD)
            .collect();
        for s in collapsed {
            reinit_used[s] = true;
            let g = problem.reinit_gamma(&eval.chain.gamma, &eval.log_emis, s);
            let cand_q = problem.m_step(g.view(), &eval.chain)?;
            if let Ok(cand) = problem.e_step(&cand_q) {
                if cand.free_energy <= next.free_energy {
                    next = cand;
                }
            }
        }

        eval = next;
        trace.push(eval.free_energy);
        if previous - eval.free_energy <= cfg.tol * eval.free_energy.abs() {
            converged = true;
            break;
        }
    }
    let gamma = eval.chain.gamma.view();
    let frozen_states: Vec<usize> = (0..k)
        .filter(|&s| gamma.column(s).sum() < COLLAPSE_THRESHOLD)
        .collect();
    let pi_counts = &problem.pi_prior + &eval.chain.initial;
    let a_counts = &problem.a_prior + &eval.chain.transitions;
    let pi = &pi_counts / pi_counts.sum();
    let a = &a_counts / &a_counts.sum_axis(Axis(1)).insert_axis(Axis(1));
    Ok(HmmModel {
        pi,
        a,
        states: problem.point_estimates(gamma, kind),
        kind,
        free_energy_trace: trace,
        converged,
        frozen_states,
    })
}
