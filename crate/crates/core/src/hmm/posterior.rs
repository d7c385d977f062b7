//! Conjugate posteriors used by variational HMM fitting: Dirichlet factors for
//! the chain and a matrix-normal / inverse-Wishart factor per state emission.

use std::f64::consts::{LN_2, PI};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::Result;
use crate::linalg::{symmetrize, Spd};

/// `ln Γ_d(a)`.
pub(crate) fn ln_multigamma(a: f64, d: usize) -> f64 {
    let d_f = d as f64;
    d_f * (d_f - 1.0) / 4.0 * PI.ln() + (1..=d).map(|i| ln_gamma(a + (1.0 - i as f64) / 2.0)).sum::<f64>()
}

/// Multivariate digamma `ψ_d(a) = Σ_i ψ(a + (1 − i)/2)`.
pub(crate) fn multi_digamma(a: f64, d: usize) -> f64 {
    (1..=d).map(|i| digamma(a + (1.0 - i as f64) / 2.0)).sum()
}

/// `E[log p]` under a Dirichlet with concentration `alpha`.
pub(crate) fn dirichlet_expected_log(alpha: ArrayView1<'_, f64>) -> Array1<f64> {
    let total = digamma(alpha.sum());
    alpha.mapv(|a| digamma(a) - total)
}

/// `KL(Dir(q) || Dir(p))`.
pub(crate) fn dirichlet_kl(q: ArrayView1<'_, f64>, p: ArrayView1<'_, f64>) -> f64 {
    let (q0, p0) = (q.sum(), p.sum());
    let elog = dirichlet_expected_log(q);
    ln_gamma(q0) - q.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(p0)
        + p.iter().map(|&b| ln_gamma(b)).sum::<f64>()
        + q.iter().zip(p.iter()).zip(elog.iter()).map(|((a, b), e)| (a - b) * e).sum::<f64>()
}

/// Matrix-normal / inverse-Wishart over `W` (`p × d`, rows `[μ; β]`) and `Σ`:
/// `Σ ~ IW(Ψ, ν)`, `vec(W) | Σ ~ N(vec(M), Σ ⊗ V)`.
#[derive(Debug, Clone)]
pub(crate) struct Mniw {
    pub m: Array2<f64>,
    pub v: Array2<f64>,
    pub v_inv: Array2<f64>,
    pub log_det_v: f64,
    pub psi: Array2<f64>,
    pub psi_inv: Array2<f64>,
    pub log_det_psi: f64,
    pub nu: f64,
}

/// Weighted sufficient statistics of one state.
pub(crate) struct WeightedStats {
    pub weight: f64,
    pub zz: Array2<f64>,
    pub zy: Array2<f64>,
    pub yy: Array2<f64>,
}

pub(crate) fn weighted_stats(z: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, w: ArrayView1<'_, f64>) -> WeightedStats {
    let zw = &z * &w.insert_axis(Axis(1));
    WeightedStats {
        weight: w.sum(),
        zz: zw.t().dot(&z),
        zy: zw.t().dot(&y),
        yy: (&y * &w.insert_axis(Axis(1))).t().dot(&y),
    }
}

impl Mniw {
    /// Prior with `M = 0`, `V = I / kappa`, `Ψ = psi_scale · I`.
    pub fn prior(p: usize, d: usize, kappa: f64, psi_scale: f64, nu: f64) -> Self {
        let eye_p = Array2::<f64>::eye(p);
        let eye_d = Array2::<f64>::eye(d);
        Self {
            m: Array2::zeros((p, d)),
            v: &eye_p / kappa,
            v_inv: &eye_p * kappa,
            log_det_v: -(p as f64) * kappa.ln(),
            psi: &eye_d * psi_scale,
            psi_inv: &eye_d / psi_scale,
            log_det_psi: d as f64 * psi_scale.ln(),
            nu,
        }
    }

    pub fn dim(&self) -> usize {
        self.psi.nrows()
    }

    /// Posterior given weighted statistics; assumes the prior mean is zero.
    pub fn update(prior: &Self, s: &WeightedStats) -> Result<Self> {
        let v_inv = &prior.v_inv + &s.zz;
        let v_spd = Spd::new(v_inv.view())?;
        let m = v_spd.solve(s.zy.view());
        let mut psi = &prior.psi + &s.yy - m.t().dot(&s.zy);
        symmetrize(&mut psi);
        let psi_spd = Spd::new(psi.view())?;
        Ok(Self {
            v: v_spd.inverse(),
            log_det_v: -v_spd.log_det(),
            v_inv,
            m,
            psi_inv: psi_spd.inverse(),
            log_det_psi: psi_spd.log_det(),
            psi,
            nu: prior.nu + s.weight,
        })
    }

    /// `E[log |Σ⁻¹|]`.
    pub fn expected_log_det_precision(&self) -> f64 {
        let d = self.dim();
        multi_digamma(self.nu / 2.0, d) + d as f64 * LN_2 - self.log_det_psi
    }

    /// `E[log N(y_t | Wᵀ z_t, Σ)]` for every row.
    pub fn expected_loglik(&self, z: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Array1<f64> {
        let d = self.dim() as f64;
        let resid = &y - &z.dot(&self.m);
        let maha = (&resid.dot(&self.psi_inv) * &resid).sum_axis(Axis(1));
        let lev = (&z.dot(&self.v) * &z).sum_axis(Axis(1));
        let c = -0.5 * d * (2.0 * PI).ln() + 0.5 * self.expected_log_det_precision();
        Array1::from_iter(maha.iter().zip(lev.iter()).map(|(m, l)| c - 0.5 * (self.nu * m + d * l)))
    }

    /// `KL(q || prior)` of the joint `(W, Σ)` factor.
    pub fn kl(&self, prior: &Self) -> f64 {
        let d = self.dim();
        let d_f = d as f64;
        let p_f = self.m.nrows() as f64;
        let (nq, np) = (self.nu, prior.nu);

        let l = self.expected_log_det_precision();
        let tr_ps = (&prior.psi * &self.psi_inv).sum();
        let wishart = (nq - np) / 2.0 * l - nq * d_f / 2.0 + nq / 2.0 * tr_ps - (nq - np) * d_f / 2.0 * LN_2
            + nq / 2.0 * self.log_det_psi
            - np / 2.0 * prior.log_det_psi
            - ln_multigamma(nq / 2.0, d)
            + ln_multigamma(np / 2.0, d);

        let dm = &self.m - &prior.m;
        let tr_v = (&prior.v_inv * &self.v).sum();
        let quad = (&dm.t().dot(&prior.v_inv).dot(&dm) * &self.psi_inv).sum() * nq;
        let normal = 0.5 * (d_f * tr_v + quad - p_f * d_f + d_f * (prior.log_det_v - self.log_det_v));
        wishart + normal
    }
}
