//! Noise-normalized problem data.
//!
//! User `k`'s channels are divided by `sigma_k * kappa`. Noise becomes 1 and
//! the scaled precoder is `F_bar = kappa F`, so SINRs are unchanged and the
//! transmit power is `||F_bar||^2 / kappa^2`.

use crate::channel_model::{EstimatedChannels, ErrorModel, QosSpec};
use crate::linalg::frob_sq;
use crate::{CMat, CVec};

#[derive(Clone, Debug)]
pub struct ScaledProblem {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub h: Vec<CVec>,
    pub g: Vec<CMat>,
    pub xi_g: Vec<f64>,
    pub xi_h: Vec<f64>,
    pub eps_g_sq: Vec<f64>,
    pub eps_h_sq: Vec<f64>,
    /// `2^R_k - 1`.
    pub gamma: Vec<f64>,
    pub rho: Vec<f64>,
    pub kappa: f64,
}

impl ScaledProblem {
    pub fn new(est: &EstimatedChannels, model: &ErrorModel, qos: &QosSpec) -> Self {
        let k = est.n_users();
        let (n, m) = (est.n_bs(), est.n_irs());
        let mean: f64 = (0..k)
            .map(|u| (est.direct_est[u].norm_squared() + frob_sq(&est.cascaded_est[u])) / qos.noise_power[u])
            .sum::<f64>()
            / k as f64;
        let kappa = if mean > 0.0 { mean.sqrt() } else { 1.0 };
        let c: Vec<f64> = (0..k).map(|u| 1.0 / (qos.noise_power[u].sqrt() * kappa)).collect();
        Self {
            n,
            m,
            k,
            h: (0..k).map(|u| &est.direct_est[u] * num_complex::Complex64::new(c[u], 0.0)).collect(),
            g: (0..k).map(|u| &est.cascaded_est[u] * num_complex::Complex64::new(c[u], 0.0)).collect(),
            xi_g: (0..k).map(|u| model.xi_g[u] * c[u]).collect(),
            xi_h: (0..k).map(|u| model.xi_h[u] * c[u]).collect(),
            eps_g_sq: (0..k).map(|u| model.eps_g_sq[u] * c[u] * c[u]).collect(),
            eps_h_sq: (0..k).map(|u| model.eps_h_sq[u] * c[u] * c[u]).collect(),
            gamma: (0..k).map(|u| qos.sinr_target(u)).collect(),
            rho: qos.outage_rho.clone(),
            kappa,
        }
    }

    /// Physical power (mW) of a scaled precoder.
    pub fn power(&self, f_bar: &CMat) -> f64 {
        frob_sq(f_bar) / (self.kappa * self.kappa)
    }

    pub fn to_physical(&self, f_bar: &CMat) -> CMat {
        f_bar.map(|z| z / self.kappa)
    }

    pub fn to_scaled(&self, f: &CMat) -> CMat {
        f.map(|z| z * self.kappa)
    }

    pub fn h_eff(&self, k: usize, e: &CVec) -> CVec {
        crate::linalg::effective_channel(&self.h[k], &self.g[k], e)
    }
}
