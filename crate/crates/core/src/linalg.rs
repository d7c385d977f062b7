//! Thin bridge between the `ndarray` types used across the crate and the
//! `nalgebra` factorizations.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

pub(crate) fn to_na(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Thin SVD `a = u · diag(s) · vt` with singular values sorted descending.
pub(crate) struct ThinSvd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub vt: Array2<f64>,
}

pub(crate) fn thin_svd(a: ArrayView2<'_, f64>) -> Result<ThinSvd> {
    let (n, d) = a.dim();
    if n == 0 || d == 0 {
        return Err(Error::EmptyMatrix);
    }
    // nalgebra is happier with tall inputs; factor the transpose of wide ones.
    let wide = d > n;
    let m = if wide { to_na(a.t()) } else { to_na(a) };
    let svd = m.try_svd(true, true, f64::EPSILON, 0).ok_or_else(|| {
        Error::Numerical("singular value decomposition did not converge".into())
    })?;
    let u = svd.u.expect("requested u");
    let vt = svd.v_t.expect("requested v_t");
    let s = svd.singular_values;
    let r = s.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));

    let (rows_u, rows_v) = if wide { (vt.ncols(), u.nrows()) } else { (u.nrows(), vt.ncols()) };
    let mut out_u = Array2::zeros((rows_u, r));
    let mut out_vt = Array2::zeros((r, rows_v));
    let mut out_s = Array1::zeros(r);
    for (dst, &src) in order.iter().enumerate() {
        out_s[dst] = s[src];
        if wide {
            // a^T = u s vt  =>  a = vt^T s u^T
            for i in 0..rows_u {
                out_u[[i, dst]] = vt[(src, i)];
            }
            for j in 0..rows_v {
                out_vt[[dst, j]] = u[(j, src)];
            }
        } else {
            for i in 0..rows_u {
                out_u[[i, dst]] = u[(i, src)];
            }
            for j in 0..rows_v {
                out_vt[[dst, j]] = vt[(src, j)];
            }
        }
    }
    Ok(ThinSvd {
        u: out_u,
        s: out_s,
        vt: out_vt,
    })
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending,
/// eigenvectors in the columns of the returned matrix.
pub(crate) fn sym_eigen(a: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
    let m = to_na(a);
    let m = (&m + m.transpose()) * 0.5;
    let eig = m.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let vecs = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Cholesky factor of a symmetric positive-definite matrix.
pub(crate) struct Spd {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl Spd {
    pub fn new(a: ArrayView2<'_, f64>) -> Result<Self> {
        let m = to_na(a);
        let m = (&m + m.transpose()) * 0.5;
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
        Ok(Self { chol })
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> Array2<f64> {
        let inv = self.chol.inverse();
        let mut out = from_na(&inv);
        symmetrize(&mut out);
        out
    }

    pub fn solve(&self, b: ArrayView2<'_, f64>) -> Array2<f64> {
        from_na(&self.chol.solve(&to_na(b)))
    }

    /// Lower-triangular factor `L` with `A = L Lᵀ`.
    pub fn lower(&self) -> Array2<f64> {
        from_na(&self.chol.l())
    }
}

pub(crate) fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
}

/// Solve a (possibly indefinite) square system by LU.
pub(crate) fn solve_lu(a: ArrayView2<'_, f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let m = to_na(a);
    let rhs = nalgebra::DVector::from_iterator(b.len(), b.iter().copied());
    m.lu().solve(&rhs).map(|x| Array1::from_iter(x.iter().copied()))
}
