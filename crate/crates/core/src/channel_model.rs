//! System dimensions, geometry, Rayleigh channels, CSI error models and
//! achievable rates.
//!
//! Powers are linear milliwatts throughout; dBm appears only in the
//! conversion helpers used at I/O boundaries.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::linalg::{cn_mat, cn_vec};
use crate::{CMat, CVec};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("invalid dimensions: {0}")]
    Dims(String),
    #[error("outage probability {0} outside (0, 1)")]
    Rho(f64),
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
    #[error("channel file: {0}")]
    Format(String),
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDims {
    /// N
    pub n_bs_antennas: usize,
    /// M
    pub n_irs_elements: usize,
    /// K
    pub n_users: usize,
}

impl SystemDims {
    pub fn new(n: usize, m: usize, k: usize) -> Result<Self, ModelError> {
        let d = Self { n_bs_antennas: n, n_irs_elements: m, n_users: k };
        d.validate()?;
        Ok(d)
    }

    /// `M = 0` is allowed and means "no IRS".
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_bs_antennas == 0 || self.n_users == 0 {
            return Err(ModelError::Dims(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Geometry {
    pub bs_pos: [f64; 2],
    pub irs_pos: [f64; 2],
    pub user_center: [f64; 2],
    pub user_radius: f64,
    /// BS-user exponent.
    pub alpha_bu: f64,
    /// BS-IRS exponent.
    pub alpha_bi: f64,
    /// IRS-user exponent.
    pub alpha_iu: f64,
    pub pl0_db: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            bs_pos: [0.0, 0.0],
            irs_pos: [50.0, 10.0],
            user_center: [70.0, 0.0],
            user_radius: 5.0,
            alpha_bu: 4.0,
            alpha_bi: 2.2,
            alpha_iu: 2.0,
            pl0_db: 40.0,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = [self.alpha_bu, self.alpha_bi, self.alpha_iu].iter().all(|a| *a > 0.0 && a.is_finite())
            && self.user_radius >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(ModelError::Dims(format!("bad geometry {self:?}")))
        }
    }
}

/// Large-scale gain in dB: `-PL0 - 10 alpha log10(d)`.
pub fn pathloss_db(d: f64, alpha: f64, pl0_db: f64) -> f64 {
    -pl0_db - 10.0 * alpha * d.log10()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrueChannels {
    /// h_k, length N.
    pub direct: Vec<CVec>,
    /// H_dr, M x N.
    pub bs_irs: CMat,
    /// h_r,k, length M.
    pub irs_user: Vec<CVec>,
    /// G_k = diag(conj(h_r,k)) H_dr.
    pub cascaded: Vec<CMat>,
    pub user_pos: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatedChannels {
    pub direct_est: Vec<CVec>,
    pub cascaded_est: Vec<CMat>,
}

impl EstimatedChannels {
    pub fn n_users(&self) -> usize {
        self.direct_est.len()
    }

    pub fn n_bs(&self) -> usize {
        self.direct_est[0].len()
    }

    pub fn n_irs(&self) -> usize {
        self.cascaded_est[0].nrows()
    }

    /// Drop the IRS: every cascaded channel becomes `0 x N`.
    pub fn without_irs(&self) -> Self {
        let n = self.n_bs();
        Self {
            direct_est: self.direct_est.clone(),
            cascaded_est: self.cascaded_est.iter().map(|_| CMat::zeros(0, n)).collect(),
        }
    }
}

impl From<&TrueChannels> for EstimatedChannels {
    fn from(t: &TrueChannels) -> Self {
        Self { direct_est: t.direct.clone(), cascaded_est: t.cascaded.clone() }
    }
}

/// `diag(conj(h_r)) H_dr`.
pub fn cascade(irs_user: &CVec, bs_irs: &CMat) -> CMat {
    let mut g = bs_irs.clone();
    for (m, mut row) in g.row_iter_mut().enumerate() {
        row *= irs_user[m].conj();
    }
    g
}

/// Seed for a `(experiment, instance, draw)` key; each draw then gets its
/// own ChaCha stream.
pub fn keyed_rng(experiment: u64, instance: u64, draw: u64) -> ChaCha8Rng {
    let mut z = experiment.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ instance.rotate_left(29);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let mut rng = ChaCha8Rng::seed_from_u64(z);
    rng.set_stream(draw);
    rng
}

/// Rayleigh channels with log-distance pathloss on every link.
///
/// Every user and every IRS element has its own keyed stream, so the same
/// seed at a larger `n`, `m` or `k` extends the smaller instance instead of
/// redrawing it.
pub fn generate_scenario(dims: SystemDims, geom: &Geometry, seed: u64) -> Result<TrueChannels, ModelError> {
    dims.validate()?;
    geom.validate()?;
    let (n, m, k) = (dims.n_bs_antennas, dims.n_irs_elements, dims.n_users);
    let gain = |d: f64, a: f64| 10f64.powf(pathloss_db(d.max(1.0), a, geom.pl0_db) / 10.0);

    let mut pos_rng = keyed_rng(seed, 0, 0);
    let user_pos: Vec<[f64; 2]> = (0..k)
        .map(|_| {
            let r = geom.user_radius * pos_rng.random::<f64>().sqrt();
            let th = pos_rng.random_range(0.0..std::f64::consts::TAU);
            [geom.user_center[0] + r * th.cos(), geom.user_center[1] + r * th.sin()]
        })
        .collect();

    let g_var = gain(dist(geom.bs_pos, geom.irs_pos), geom.alpha_bi);
    let mut bs_irs = CMat::zeros(m, n);
    for i in 0..m {
        let row = cn_vec(&mut keyed_rng(seed, 1, i as u64), n, g_var);
        bs_irs.row_mut(i).copy_from(&row.transpose());
    }
    let mut direct = Vec::with_capacity(k);
    let mut irs_user = Vec::with_capacity(k);
    for (u, p) in user_pos.iter().enumerate() {
        direct.push(cn_vec(&mut keyed_rng(seed, 2, u as u64), n, gain(dist(geom.bs_pos, *p), geom.alpha_bu)));
        irs_user.push(cn_vec(&mut keyed_rng(seed, 3, u as u64), m, gain(dist(geom.irs_pos, *p), geom.alpha_iu)));
    }
    let cascaded = irs_user.iter().map(|hr| cascade(hr, &bs_irs)).collect();
    Ok(TrueChannels { direct, bs_irs, irs_user, cascaded, user_pos })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorKind {
    Bounded,
    Statistical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub kind: ErrorKind,
    pub xi_g: Vec<f64>,
    pub xi_h: Vec<f64>,
    pub eps_g_sq: Vec<f64>,
    pub eps_h_sq: Vec<f64>,
    pub delta_g: f64,
    pub delta_h: f64,
    pub outage_rho: Vec<f64>,
}

impl ErrorModel {
    /// Variances relative to the estimates and radii from the inverse
    /// chi-square CDF, so that both error models describe the same spread.
    pub fn from_estimates(
        kind: ErrorKind,
        est: &EstimatedChannels,
        delta_g: f64,
        delta_h: f64,
        rho: f64,
    ) -> Result<Self, ModelError> {
        let k = est.n_users();
        let (n, m) = (est.n_bs(), est.n_irs());
        let mut model = Self {
            kind,
            xi_g: vec![0.0; k],
            xi_h: vec![0.0; k],
            eps_g_sq: vec![0.0; k],
            eps_h_sq: vec![0.0; k],
            delta_g,
            delta_h,
            outage_rho: vec![rho; k],
        };
        for u in 0..k {
            let g2: f64 = est.cascaded_est[u].iter().map(|z| z.norm_sqr()).sum();
            model.eps_g_sq[u] = delta_g * delta_g * g2;
            model.eps_h_sq[u] = delta_h * delta_h * est.direct_est[u].norm_squared();
            if m * n > 0 {
                model.xi_g[u] = error_radii(model.eps_g_sq[u], m * n, rho)?;
            }
            model.xi_h[u] = error_radii(model.eps_h_sq[u], n, rho)?;
        }
        Ok(model)
    }

    /// Zero error of the given kind.
    pub fn exact(kind: ErrorKind, k: usize) -> Self {
        Self {
            kind,
            xi_g: vec![0.0; k],
            xi_h: vec![0.0; k],
            eps_g_sq: vec![0.0; k],
            eps_h_sq: vec![0.0; k],
            delta_g: 0.0,
            delta_h: 0.0,
            outage_rho: vec![0.05; k],
        }
    }

    /// PCU: the direct channels are known exactly.
    pub fn partial(mut self) -> Self {
        self.delta_h = 0.0;
        self.xi_h.iter_mut().for_each(|v| *v = 0.0);
        self.eps_h_sq.iter_mut().for_each(|v| *v = 0.0);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QosSpec {
    /// R_k in bit/s/Hz.
    pub target_rate: Vec<f64>,
    /// sigma_k^2 in mW.
    pub noise_power: Vec<f64>,
    pub outage_rho: Vec<f64>,
}

impl QosSpec {
    pub fn uniform(k: usize, rate: f64, noise_dbm: f64, rho: f64) -> Self {
        Self { target_rate: vec![rate; k], noise_power: vec![dbm_to_mw(noise_dbm); k], outage_rho: vec![rho; k] }
    }

    /// `2^R_k - 1`.
    pub fn sinr_target(&self, k: usize) -> f64 {
        2f64.powf(self.target_rate[k]) - 1.0
    }
}

/// One draw of (dh, dG) for user `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorDraw {
    pub dh: CVec,
    pub dg: CMat,
}

/// Uniform sample from the complex ball of dimension `d` and radius `xi`.
fn ball_sample<R: Rng>(rng: &mut R, d: usize, xi: f64) -> Vec<Complex64> {
    if d == 0 {
        return Vec::new();
    }
    let mut v: Vec<Complex64> = (0..d)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let u: f64 = rng.random();
    let r = xi * u.powf(1.0 / (2 * d) as f64);
    if norm > 0.0 {
        v.iter_mut().for_each(|z| *z *= r / norm);
    }
    v
}

/// Draw the CSI error of user `k` under `model`.
pub fn draw_error<R: Rng>(rng: &mut R, model: &ErrorModel, k: usize, n: usize, m: usize) -> ErrorDraw {
    match model.kind {
        ErrorKind::Statistical => {
            ErrorDraw { dh: cn_vec(rng, n, model.eps_h_sq[k]), dg: cn_mat(rng, m, n, model.eps_g_sq[k]) }
        }
        ErrorKind::Bounded => {
            let dh = ball_sample(rng, n, model.xi_h[k]);
            let dg = ball_sample(rng, m * n, model.xi_g[k]);
            ErrorDraw { dh: DVector::from_vec(dh), dg: CMat::from_vec(m, n, dg) }
        }
    }
}

/// Estimates such that `truth = estimate + error`.
pub fn perturb_channels(truth: &TrueChannels, model: &ErrorModel, seed: u64) -> EstimatedChannels {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = truth.bs_irs.ncols();
    let m = truth.bs_irs.nrows();
    let mut est = EstimatedChannels::from(truth);
    for k in 0..truth.direct.len() {
        let err = draw_error(&mut rng, model, k, n, m);
        est.direct_est[k] -= err.dh;
        est.cascaded_est[k] -= err.dg;
    }
    est
}

/// CDF of the chi-square law with `2d` degrees of freedom.
fn chi2_cdf(x: f64, d: usize) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(d as f64, x / 2.0)
    }
}

fn chi2_pdf(x: f64, d: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = d as f64;
    ((k - 1.0) * x.ln() - x / 2.0 - k * 2f64.ln() - ln_gamma(k)).exp()
}

/// Inverse chi-square CDF (`2d` degrees of freedom) by safeguarded Newton.
pub fn chi2_inverse_cdf(p: f64, d: usize) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    let k = 2.0 * d as f64;
    // Wilson-Hilferty start.
    let z = statrs::distribution::ContinuousCDF::inverse_cdf(
        &statrs::distribution::Normal::new(0.0, 1.0).unwrap(),
        p,
    );
    let c = 2.0 / (9.0 * k);
    let mut x = (k * (1.0 - c + z * c.sqrt()).powi(3)).max(1e-8);
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    for _ in 0..200 {
        let f = chi2_cdf(x, d) - p;
        if f.abs() < 1e-15 {
            break;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = f / chi2_pdf(x, d);
        let mut next = x - step;
        if !next.is_finite() || next <= lo || next >= hi {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(1.0) };
        }
        if (next - x).abs() < 1e-12 {
            x = next;
            break;
        }
        x = next;
    }
    x
}

/// Radius `sqrt(eps^2/2 * F^-1_{2d}(1 - rho))` of the error ball containing
/// a `CN(0, eps^2 I_d)` error with probability `1 - rho`.
pub fn error_radii(eps_sq: f64, complex_dim: usize, rho: f64) -> Result<f64, ModelError> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(ModelError::Rho(rho));
    }
    if complex_dim == 0 {
        return Err(ModelError::Dims("complex_dim must be at least 1".into()));
    }
    if eps_sq == 0.0 {
        return Ok(0.0);
    }
    Ok((eps_sq / 2.0 * chi2_inverse_cdf(1.0 - rho, complex_dim)).sqrt())
}

/// SINR of user `k`.
pub fn sinr(f: &CMat, e: &CVec, h: &CVec, g: &CMat, sigma_sq: f64, k: usize) -> Result<f64, ModelError> {
    let n = f.nrows();
    if h.len() != n || g.ncols() != n || g.nrows() != e.len() || k >= f.ncols() {
        return Err(ModelError::Mismatch(format!(
            "F {}x{}, e {}, h {}, G {}x{}, k {k}",
            f.nrows(),
            f.ncols(),
            e.len(),
            h.len(),
            g.nrows(),
            g.ncols()
        )));
    }
    // row = h^H + e^H G
    let row = h.adjoint() + e.adjoint() * g;
    let y = row * f;
    let sig = y[k].norm_sqr();
    let interf: f64 = y.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, z)| z.norm_sqr()).sum();
    Ok(sig / (interf + sigma_sq))
}

/// `log2(1 + SINR_k)`.
pub fn achievable_rate(f: &CMat, e: &CVec, h: &CVec, g: &CMat, sigma_sq: f64, k: usize) -> Result<f64, ModelError> {
    debug_assert!(e.iter().all(|z| (z.norm() - 1.0).abs() < 1e-6), "reflection vector not unit modulus");
    Ok((1.0 + sinr(f, e, h, g, sigma_sq, k)?).log2())
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

type JVec = Vec<[f64; 2]>;
/// Row-major list of rows.
type JMat = Vec<JVec>;

fn jvec(v: &CVec) -> JVec {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn jmat(m: &CMat) -> JMat {
    m.row_iter().map(|r| r.iter().map(|z| [z.re, z.im]).collect()).collect()
}

fn cvec(v: &JVec) -> CVec {
    DVector::from_iterator(v.len(), v.iter().map(|p| Complex64::new(p[0], p[1])))
}

fn cmat(m: &JMat, cols: usize) -> Result<CMat, ModelError> {
    if m.iter().any(|r| r.len() != cols) {
        return Err(ModelError::Format("ragged matrix".into()));
    }
    Ok(CMat::from_fn(m.len(), cols, |i, j| Complex64::new(m[i][j][0], m[i][j][1])))
}

/// On-disk channel set. Complex numbers are `[re, im]`; matrices are lists
/// of rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChannelFile {
    pub dims: SystemDims,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TrueJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrueJson {
    pub direct: Vec<JVec>,
    pub bs_irs: JMat,
    pub irs_user: Vec<JVec>,
    pub cascaded: Vec<JMat>,
    pub user_pos: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateJson {
    pub direct_est: Vec<JVec>,
    pub cascaded_est: Vec<JMat>,
}

impl ChannelFile {
    pub fn new(dims: SystemDims, truth: Option<&TrueChannels>, est: Option<&EstimatedChannels>) -> Self {
        Self {
            dims,
            truth: truth.map(|t| TrueJson {
                direct: t.direct.iter().map(jvec).collect(),
                bs_irs: jmat(&t.bs_irs),
                irs_user: t.irs_user.iter().map(jvec).collect(),
                cascaded: t.cascaded.iter().map(jmat).collect(),
                user_pos: t.user_pos.clone(),
            }),
            estimate: est.map(|e| EstimateJson {
                direct_est: e.direct_est.iter().map(jvec).collect(),
                cascaded_est: e.cascaded_est.iter().map(jmat).collect(),
            }),
        }
    }

    pub fn truth(&self) -> Result<Option<TrueChannels>, ModelError> {
        let n = self.dims.n_bs_antennas;
        let Some(t) = &self.truth else { return Ok(None) };
        let out = TrueChannels {
            direct: t.direct.iter().map(cvec).collect(),
            bs_irs: cmat(&t.bs_irs, n)?,
            irs_user: t.irs_user.iter().map(cvec).collect(),
            cascaded: t.cascaded.iter().map(|m| cmat(m, n)).collect::<Result<_, _>>()?,
            user_pos: t.user_pos.clone(),
        };
        Ok(Some(out))
    }

    pub fn estimate(&self) -> Result<Option<EstimatedChannels>, ModelError> {
        let n = self.dims.n_bs_antennas;
        let Some(e) = &self.estimate else { return Ok(None) };
        let out = EstimatedChannels {
            direct_est: e.direct_est.iter().map(cvec).collect(),
            cascaded_est: e.cascaded_est.iter().map(|m| cmat(m, n)).collect::<Result<_, _>>()?,
        };
        let dims_ok = out.direct_est.len() == self.dims.n_users
            && out.direct_est.iter().all(|h| h.len() == n)
            && out.cascaded_est.iter().all(|g| g.nrows() == self.dims.n_irs_elements);
        if !dims_ok {
            return Err(ModelError::Format("estimate does not match dims".into()));
        }
        Ok(Some(out))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("channel file serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        serde_json::from_str(s).map_err(|e| ModelError::Format(e.to_string()))
    }
}
