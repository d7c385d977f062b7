//! Forward-backward recursions.
//!
//! Two implementations over the same inputs (log initial weights, log
//! transition weights, log emission weights): a scaled one used everywhere,
//! and a log-space one kept as an independent cross-check. Neither requires
//! the weights to be normalized, which is what variational inference needs
//! (it plugs in `exp(E[log π])` and friends).

use std::ops::Range;

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Posterior state marginals and pairwise marginals of one or more
/// independent sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors {
    /// `T × K`, rows sum to one.
    pub gamma: Array2<f64>,
    /// `(T−1) × K × K`. Slices that straddle a session boundary hold the
    /// product of the neighbouring marginals (sessions are independent).
    pub xi: Array3<f64>,
    /// Log of the normalizing constant (the log likelihood when the inputs
    /// are normalized).
    pub loglik: f64,
}

/// Sufficient statistics of the hidden chain without the full `xi` array.
#[derive(Debug, Clone)]
pub(crate) struct ChainStats {
    pub gamma: Array2<f64>,
    /// Σ over session starts of gamma.
    pub initial: Array1<f64>,
    /// Σ over within-session transitions of xi.
    pub transitions: Array2<f64>,
    pub log_norm: f64,
}

fn check_inputs(log_init: ArrayView1<'_, f64>, log_trans: ArrayView2<'_, f64>, log_emis: ArrayView2<'_, f64>) -> Result<()> {
    let k = log_init.len();
    if log_trans.dim() != (k, k) || log_emis.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "K = {k} initial weights, transition {:?}, emissions {:?}",
            log_trans.dim(),
            log_emis.dim()
        )));
    }
    if let Some(((row, col), _)) = log_emis.indexed_iter().find(|(_, v)| v.is_nan() || **v == f64::INFINITY) {
        return Err(Error::Numerical(format!(
            "non-finite emission log-likelihood at t = {row}, state {col}"
        )));
    }
    Ok(())
}

/// Scaled forward-backward over each session range. Accumulates only the
/// chain statistics.
pub(crate) fn chain_stats(
    log_init: ArrayView1<'_, f64>,
    log_trans: ArrayView2<'_, f64>,
    log_emis: ArrayView2<'_, f64>,
    sessions: &[Range<usize>],
) -> Result<ChainStats> {
    let (gamma, initial, transitions, log_norm, _) = scaled(log_init, log_trans, log_emis, sessions, false)?;
    Ok(ChainStats {
        gamma,
        initial,
        transitions,
        log_norm,
    })
}

/// Scaled forward-backward returning full pairwise posteriors.
pub fn forward_backward_scaled(
    log_init: ArrayView1<'_, f64>,
    log_trans: ArrayView2<'_, f64>,
    log_emis: ArrayView2<'_, f64>,
    sessions: &[Range<usize>],
) -> Result<Posteriors> {
    let (gamma, _, _, loglik, xi) = scaled(log_init, log_trans, log_emis, sessions, true)?;
    Ok(Posteriors {
        gamma,
        xi: xi.expect("requested"),
        loglik,
    })
}

type ScaledOut = (Array2<f64>, Array1<f64>, Array2<f64>, f64, Option<Array3<f64>>);

fn scaled(
    log_init: ArrayView1<'_, f64>,
    log_trans: ArrayView2<'_, f64>,
    log_emis: ArrayView2<'_, f64>,
    sessions: &[Range<usize>],
    want_xi: bool,
) -> Result<ScaledOut> {
    check_inputs(log_init, log_trans, log_emis)?;
    let (t_total, k) = log_emis.dim();
    let init = log_init.mapv(f64::exp);
    let trans = log_trans.mapv(f64::exp);

    // per-row emission weights, shifted by the row maximum
    let mut emis = Array2::<f64>::zeros((t_total, k));
    let mut offsets = Array1::<f64>::zeros(t_total);
    for (t, row) in log_emis.rows().into_iter().enumerate() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if m == f64::NEG_INFINITY {
            return Err(Error::Numerical(format!("all states impossible at t = {t}")));
        }
        offsets[t] = m;
        emis.row_mut(t).assign(&row.mapv(|v| (v - m).exp()));
    }

    let mut alpha = Array2::<f64>::zeros((t_total, k));
    let mut beta = Array2::<f64>::zeros((t_total, k));
    let mut scale = Array1::<f64>::zeros(t_total);
    let mut gamma = Array2::<f64>::zeros((t_total, k));
    let mut initial = Array1::<f64>::zeros(k);
    let mut transitions = Array2::<f64>::zeros((k, k));
    let mut xi = if want_xi {
        Some(Array3::<f64>::zeros((t_total.saturating_sub(1), k, k)))
    } else {
        None
    };
    let mut log_norm = 0.0;

    for range in sessions {
        let (start, end) = (range.start, range.end);
        for t in start..end {
            let prior = if t == start {
                init.clone()
            } else {
                alpha.row(t - 1).dot(&trans)
            };
            let a = &prior * &emis.row(t);
            let c = a.sum();
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Numerical(format!("forward pass underflow at t = {t}")));
            }
            scale[t] = c;
            alpha.row_mut(t).assign(&(a / c));
            log_norm += c.ln() + offsets[t];
        }
        beta.row_mut(end - 1).fill(1.0);
        for t in (start..end - 1).rev() {
            let next = &emis.row(t + 1) * &beta.row(t + 1);
            let b = trans.dot(&next) / scale[t + 1];
            beta.row_mut(t).assign(&b);
        }
        for t in start..end {
            let g = &alpha.row(t) * &beta.row(t);
            let s = g.sum();
            gamma.row_mut(t).assign(&(g / s));
        }
        initial += &gamma.row(start);
        for t in start..end - 1 {
            let next = &emis.row(t + 1) * &beta.row(t + 1) / scale[t + 1];
            let mut pair = Array2::<f64>::zeros((k, k));
            for i in 0..k {
                for j in 0..k {
                    pair[[i, j]] = alpha[[t, i]] * trans[[i, j]] * next[j];
                }
            }
            let s = pair.sum();
            pair /= s;
            transitions += &pair;
            if let Some(xi) = xi.as_mut() {
                xi.index_axis_mut(Axis(0), t).assign(&pair);
            }
        }
    }

    if let Some(xi) = xi.as_mut() {
        for range in sessions.iter().skip(1) {
            let t = range.start - 1;
            let outer = outer(gamma.row(t), gamma.row(t + 1));
            xi.index_axis_mut(Axis(0), t).assign(&outer);
        }
    }
    Ok((gamma, initial, transitions, log_norm, xi))
}

fn outer(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-space forward-backward (no scaling), same contract as
/// [`forward_backward_scaled`].
pub fn forward_backward_log(
    log_init: ArrayView1<'_, f64>,
    log_trans: ArrayView2<'_, f64>,
    log_emis: ArrayView2<'_, f64>,
    sessions: &[Range<usize>],
) -> Result<Posteriors> {
    check_inputs(log_init, log_trans, log_emis)?;
    let (t_total, k) = log_emis.dim();
    let mut la = Array2::<f64>::from_elem((t_total, k), f64::NEG_INFINITY);
    let mut lb = Array2::<f64>::zeros((t_total, k));
    let mut gamma = Array2::<f64>::zeros((t_total, k));
    let mut xi = Array3::<f64>::zeros((t_total.saturating_sub(1), k, k));
    let mut loglik = 0.0;

    for range in sessions {
        let (start, end) = (range.start, range.end);
        for j in 0..k {
            la[[start, j]] = log_init[j] + log_emis[[start, j]];
        }
        for t in start + 1..end {
            for j in 0..k {
                let prev = (0..k).map(|i| la[[t - 1, i]] + log_trans[[i, j]]);
                la[[t, j]] = log_sum_exp(prev) + log_emis[[t, j]];
            }
        }
        for t in (start..end - 1).rev() {
            for i in 0..k {
                let next = (0..k).map(|j| log_trans[[i, j]] + log_emis[[t + 1, j]] + lb[[t + 1, j]]);
                lb[[t, i]] = log_sum_exp(next);
            }
        }
        let z = log_sum_exp((0..k).map(|j| la[[end - 1, j]]));
        loglik += z;
        for t in start..end {
            for j in 0..k {
                gamma[[t, j]] = (la[[t, j]] + lb[[t, j]] - z).exp();
            }
            for i in 0..k {
                if t + 1 < end {
                    for j in 0..k {
                        xi[[t, i, j]] =
                            (la[[t, i]] + log_trans[[i, j]] + log_emis[[t + 1, j]] + lb[[t + 1, j]] - z).exp();
                    }
                }
            }
        }
    }
    for range in sessions.iter().skip(1) {
        let t = range.start - 1;
        let o = outer(gamma.row(t), gamma.row(t + 1));
        xi.index_axis_mut(Axis(0), t).assign(&o);
    }
    Ok(Posteriors { gamma, xi, loglik })
}
