//! Dense primal-dual interior-point method for linear, second-order and
//! semidefinite cones.
//!
//! Homogeneous self-dual embedding with Nesterov-Todd scaling and a
//! Mehrotra predictor-corrector step. The standard form is
//!
//! ```text
//! minimize c'x  s.t.  Ax = b,  Gx + s = h,  s in K
//! ```
//!
//! PSD cone elements are kept as full symmetric matrices with the trace
//! inner product. Coefficient matrices of low numerical rank are detected
//! once and handled in factored form, which keeps the normal-equation
//! assembly cheap for the large LMIs with rank-two structure.

use log::{debug, trace};
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};

use crate::program::{ConicProgram, Sense};
use crate::{ConicSolution, SolveStatus};

/// Interior-point settings.
#[derive(Clone, Debug)]
pub struct IpmOptions {
    pub max_iter: usize,
    /// Fraction of the distance to the boundary taken per step.
    pub step_fraction: f64,
    /// Coefficient matrices at least this large are tested for low rank.
    pub low_rank_min_dim: usize,
    /// Sketch width of the randomized range finder.
    pub low_rank_sketch: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self { max_iter: 120, step_fraction: 0.99, low_rank_min_dim: 16, low_rank_sketch: 16 }
    }
}

// ---------------------------------------------------------------------------
// Coefficient storage
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum Coeff {
    Dense(DMatrix<f64>),
    /// `U diag(d) U'`.
    LowRank { u: DMatrix<f64>, d: DVector<f64> },
}

/// Deterministic uniform(-1, 1) stream for the range-finder sketch.
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }
}

impl Coeff {
    fn compress(m: DMatrix<f64>, opts: &IpmOptions) -> Coeff {
        let n = m.nrows();
        let k = opts.low_rank_sketch;
        if n < opts.low_rank_min_dim || 2 * k > n {
            return Coeff::Dense(m);
        }
        let mut rng = Lcg(0x9e3779b97f4a7c15 ^ n as u64);
        let omega = DMatrix::from_fn(n, k, |_, _| rng.next());
        let y = &m * omega;
        // SVD rather than QR: the sketch is rank deficient for very sparse
        // coefficients and Householder QR then divides by zero.
        let svd = y.svd(true, false);
        let u_y = svd.u.expect("requested");
        let smax = svd.singular_values.amax();
        if !(smax > 0.0 && smax.is_finite()) {
            return Coeff::Dense(m);
        }
        let cols: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-14 * smax).collect();
        let q = DMatrix::from_fn(n, cols.len(), |r, c| u_y[(r, cols[c])]);
        let mq = &m * &q;
        let b = q.transpose() * &mq;
        let b = (&b + b.transpose()) * 0.5;
        let resid = &m - &q * &b * q.transpose();
        let mnorm = m.norm();
        if mnorm == 0.0 || resid.norm() > 1e-11 * mnorm {
            return Coeff::Dense(m);
        }
        let eig = SymmetricEigen::new(b);
        let dmax = eig.eigenvalues.amax();
        let keep: Vec<usize> =
            (0..cols.len()).filter(|&i| eig.eigenvalues[i].abs() > 1e-13 * dmax).collect();
        let vecs = &q * &eig.eigenvectors;
        let u = DMatrix::from_fn(n, keep.len(), |r, c| vecs[(r, keep[c])]);
        let d = DVector::from_fn(keep.len(), |i, _| eig.eigenvalues[keep[i]]);
        Coeff::LowRank { u, d }
    }

    /// `<C, Z>` under the trace inner product.
    fn dot(&self, z: &DMatrix<f64>) -> f64 {
        match self {
            Coeff::Dense(c) => c.dot(z),
            Coeff::LowRank { u, d } => {
                let zu = z * u;
                (0..d.len()).map(|i| d[i] * u.column(i).dot(&zu.column(i))).sum()
            }
        }
    }

    fn add_to(&self, alpha: f64, out: &mut DMatrix<f64>) {
        match self {
            Coeff::Dense(c) => mat_axpy(out, alpha, c),
            Coeff::LowRank { u, d } => {
                let mut ud = u.clone();
                for (i, mut col) in ud.column_iter_mut().enumerate() {
                    col *= alpha * d[i];
                }
                out.gemm(1.0, &ud, &u.transpose(), 1.0);
            }
        }
    }

    /// `T C T'`.
    fn congruence(&self, t: &DMatrix<f64>) -> Coeff {
        match self {
            Coeff::Dense(c) => Coeff::Dense(t * c * t.transpose()),
            Coeff::LowRank { u, d } => Coeff::LowRank { u: t * u, d: d.clone() },
        }
    }
}

/// `y += alpha * x` for matrices.
fn mat_axpy(y: &mut DMatrix<f64>, alpha: f64, x: &DMatrix<f64>) {
    y.as_mut_slice().iter_mut().zip(x.as_slice()).for_each(|(a, b)| *a += alpha * b);
}

/// `<B1, B2>` for scaled coefficients.
fn coeff_inner(a: &Coeff, b: &Coeff) -> f64 {
    match (a, b) {
        (Coeff::Dense(x), Coeff::Dense(y)) => x.dot(y),
        (Coeff::Dense(x), lr @ Coeff::LowRank { .. }) | (lr @ Coeff::LowRank { .. }, Coeff::Dense(x)) => {
            lr.dot(x)
        }
        (Coeff::LowRank { u: ua, d: da }, Coeff::LowRank { u: ub, d: db }) => {
            let m = ua.transpose() * ub;
            let mut acc = 0.0;
            for j in 0..db.len() {
                for i in 0..da.len() {
                    acc += da[i] * db[j] * m[(i, j)] * m[(i, j)];
                }
            }
            acc
        }
    }
}

// ---------------------------------------------------------------------------
// Standard form and cone vectors
// ---------------------------------------------------------------------------

struct PsdOp {
    dim: usize,
    h: DMatrix<f64>,
    /// Columns of G for this block, already negated.
    terms: Vec<(usize, Coeff)>,
}

struct StdForm {
    n: usize,
    c: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    gl: DMatrix<f64>,
    hl: DVector<f64>,
    soc: Vec<(DMatrix<f64>, DVector<f64>)>,
    psd: Vec<PsdOp>,
}

#[derive(Clone, Debug)]
struct CVec {
    lin: DVector<f64>,
    soc: Vec<DVector<f64>>,
    psd: Vec<DMatrix<f64>>,
}

impl CVec {
    fn dot(&self, o: &CVec) -> f64 {
        self.lin.dot(&o.lin)
            + self.soc.iter().zip(&o.soc).map(|(a, b)| a.dot(b)).sum::<f64>()
            + self.psd.iter().zip(&o.psd).map(|(a, b)| a.dot(b)).sum::<f64>()
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn axpy(&mut self, alpha: f64, o: &CVec) {
        self.lin.axpy(alpha, &o.lin, 1.0);
        for (a, b) in self.soc.iter_mut().zip(&o.soc) {
            a.axpy(alpha, b, 1.0);
        }
        for (a, b) in self.psd.iter_mut().zip(&o.psd) {
            mat_axpy(a, alpha, b);
        }
    }

    fn scaled(&self, alpha: f64) -> CVec {
        CVec {
            lin: &self.lin * alpha,
            soc: self.soc.iter().map(|v| v * alpha).collect(),
            psd: self.psd.iter().map(|m| m * alpha).collect(),
        }
    }

    fn sub(&self, o: &CVec) -> CVec {
        let mut r = self.clone();
        r.axpy(-1.0, o);
        r
    }

    fn zeros_like(&self) -> CVec {
        self.scaled(0.0)
    }
}

impl StdForm {
    fn from_program(prog: &ConicProgram, opts: &IpmOptions) -> StdForm {
        let n = prog.n_vars;
        let eq: Vec<_> = prog.linear_rows.iter().filter(|r| r.sense == Sense::Eq).collect();
        let ge: Vec<_> = prog.linear_rows.iter().filter(|r| r.sense == Sense::Ge).collect();
        let mut a = DMatrix::zeros(eq.len(), n);
        let mut b = DVector::zeros(eq.len());
        for (i, r) in eq.iter().enumerate() {
            for &(j, v) in &r.coeffs {
                a[(i, j)] += v;
            }
            b[i] = r.rhs;
        }
        // a.x >= rhs  <=>  s = a.x - rhs >= 0  <=>  G = -a, h = -rhs
        let mut gl = DMatrix::zeros(ge.len(), n);
        let mut hl = DVector::zeros(ge.len());
        for (i, r) in ge.iter().enumerate() {
            for &(j, v) in &r.coeffs {
                gl[(i, j)] -= v;
            }
            hl[i] = -r.rhs;
        }
        let soc = prog
            .soc_blocks
            .iter()
            .map(|blk| {
                let rows: Vec<_> = std::iter::once(&blk.t).chain(&blk.u).collect();
                let mut g = DMatrix::zeros(rows.len(), n);
                let mut h = DVector::zeros(rows.len());
                for (i, e) in rows.iter().enumerate() {
                    h[i] = e.constant;
                    for &(j, v) in &e.terms {
                        g[(i, j)] -= v;
                    }
                }
                (g, h)
            })
            .collect();
        let psd = prog
            .psd_blocks
            .iter()
            .map(|blk| {
                let mut merged: Vec<(usize, DMatrix<f64>)> = Vec::new();
                for (j, m) in &blk.terms {
                    match merged.iter_mut().find(|t| t.0 == *j) {
                        Some(t) => t.1 += m,
                        None => merged.push((*j, m.clone())),
                    }
                }
                let terms = merged
                    .into_iter()
                    .map(|(j, m)| {
                        let m = (&m + m.transpose()) * -0.5;
                        (j, Coeff::compress(m, opts))
                    })
                    .collect();
                let h = (&blk.constant + blk.constant.transpose()) * 0.5;
                PsdOp { dim: blk.dim, h, terms }
            })
            .collect();
        StdForm { n, c: DVector::from_column_slice(&prog.objective), a, b, gl, hl, soc, psd }
    }

    fn degree(&self) -> usize {
        self.hl.len() + self.soc.len() + self.psd.iter().map(|p| p.dim).sum::<usize>()
    }

    fn h_vec(&self) -> CVec {
        CVec {
            lin: self.hl.clone(),
            soc: self.soc.iter().map(|s| s.1.clone()).collect(),
            psd: self.psd.iter().map(|p| p.h.clone()).collect(),
        }
    }

    fn identity(&self) -> CVec {
        CVec {
            lin: DVector::from_element(self.hl.len(), 1.0),
            soc: self
                .soc
                .iter()
                .map(|s| {
                    let mut e = DVector::zeros(s.1.len());
                    e[0] = 1.0;
                    e
                })
                .collect(),
            psd: self.psd.iter().map(|p| DMatrix::identity(p.dim, p.dim)).collect(),
        }
    }

    fn g_mul(&self, x: &DVector<f64>) -> CVec {
        CVec {
            lin: &self.gl * x,
            soc: self.soc.iter().map(|(g, _)| g * x).collect(),
            psd: self
                .psd
                .iter()
                .map(|p| {
                    let mut m = DMatrix::zeros(p.dim, p.dim);
                    for (j, c) in &p.terms {
                        if x[*j] != 0.0 {
                            c.add_to(x[*j], &mut m);
                        }
                    }
                    m
                })
                .collect(),
        }
    }

    fn gt_mul(&self, z: &CVec) -> DVector<f64> {
        let mut out = self.gl.tr_mul(&z.lin);
        for ((g, _), v) in self.soc.iter().zip(&z.soc) {
            out += g.tr_mul(v);
        }
        for (p, m) in self.psd.iter().zip(&z.psd) {
            for (j, c) in &p.terms {
                out[*j] += c.dot(m);
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Nesterov-Todd scaling and Jordan algebra
// ---------------------------------------------------------------------------

struct SocScale {
    eta: f64,
    v: DVector<f64>,
}

struct PsdScale {
    r: DMatrix<f64>,
    rinv: DMatrix<f64>,
}

struct Scaling {
    lin: DVector<f64>,
    soc: Vec<SocScale>,
    psd: Vec<PsdScale>,
}

fn jdot(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a[0] * b[0] - a.rows(1, a.len() - 1).dot(&b.rows(1, b.len() - 1))
}

fn apply_j(a: &DVector<f64>) -> DVector<f64> {
    let mut r = -a;
    r[0] = a[0];
    r
}

impl Scaling {
    fn identity(sf: &StdForm) -> Scaling {
        Scaling {
            lin: DVector::from_element(sf.hl.len(), 1.0),
            soc: sf
                .soc
                .iter()
                .map(|s| {
                    // eta = 1, v = e gives W = 2ee' - J = I.
                    let mut v = DVector::zeros(s.1.len());
                    v[0] = 1.0;
                    SocScale { eta: 1.0, v }
                })
                .collect(),
            psd: sf
                .psd
                .iter()
                .map(|p| PsdScale { r: DMatrix::identity(p.dim, p.dim), rinv: DMatrix::identity(p.dim, p.dim) })
                .collect(),
        }
    }

    /// NT scaling point of interior `s`, `z`; `None` if either left the cone.
    fn compute(s: &CVec, z: &CVec) -> Option<Scaling> {
        if s.lin.iter().chain(z.lin.iter()).any(|&v| v <= 0.0) {
            return None;
        }
        let lin = s.lin.zip_map(&z.lin, |a, b| (a / b).sqrt());
        let mut soc = Vec::with_capacity(s.soc.len());
        for (sk, zk) in s.soc.iter().zip(&z.soc) {
            let ss = jdot(sk, sk);
            let zz = jdot(zk, zk);
            if ss <= 0.0 || zz <= 0.0 || sk[0] <= 0.0 || zk[0] <= 0.0 {
                return None;
            }
            let (aa, bb) = (ss.sqrt(), zz.sqrt());
            let sb = sk / aa;
            let zb = zk / bb;
            let gamma = ((1.0 + sb.dot(&zb)) / 2.0).sqrt();
            let mut w = (&sb + apply_j(&zb)) / (2.0 * gamma);
            // Renormalize against drift so that w'Jw = 1.
            let wn = jdot(&w, &w);
            if wn <= 0.0 {
                return None;
            }
            w /= wn.sqrt();
            let mut v = w.clone();
            v[0] += 1.0;
            v /= (2.0 * (w[0] + 1.0)).sqrt();
            soc.push(SocScale { eta: (aa / bb).sqrt(), v });
        }
        let mut psd = Vec::with_capacity(s.psd.len());
        for (sk, zk) in s.psd.iter().zip(&z.psd) {
            let ls = Cholesky::new(sk.clone())?.l();
            let lz = Cholesky::new(zk.clone())?.l();
            let m = lz.transpose() * &ls;
            let svd = SVD::new(m, true, true);
            let u = svd.u?;
            let vt = svd.v_t?;
            let sv = svd.singular_values;
            if sv.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
                return None;
            }
            let n = sv.len();
            let mut r = ls * vt.transpose();
            let mut rinv = u.transpose() * lz.transpose();
            for i in 0..n {
                let f = sv[i].sqrt();
                r.column_mut(i).unscale_mut(f);
                rinv.row_mut(i).unscale_mut(f);
            }
            psd.push(PsdScale { r, rinv });
        }
        Some(Scaling { lin, soc, psd })
    }

    /// `W z`.
    fn w(&self, z: &CVec) -> CVec {
        CVec {
            lin: self.lin.component_mul(&z.lin),
            soc: self
                .soc
                .iter()
                .zip(&z.soc)
                .map(|(sc, zk)| (&sc.v * (2.0 * sc.v.dot(zk)) - apply_j(zk)) * sc.eta)
                .collect(),
            psd: self.psd.iter().zip(&z.psd).map(|(sc, m)| sc.r.transpose() * m * &sc.r).collect(),
        }
    }

    /// `W^{-T} s` (equal to `W^{-1} s` on the linear and SOC parts).
    fn winvt(&self, s: &CVec) -> CVec {
        CVec {
            lin: s.lin.component_div(&self.lin),
            soc: self.soc.iter().zip(&s.soc).map(|(sc, sk)| Self::soc_winv(sc, sk)).collect(),
            psd: self.psd.iter().zip(&s.psd).map(|(sc, m)| &sc.rinv * m * sc.rinv.transpose()).collect(),
        }
    }

    /// `W^T u`.
    fn wt(&self, u: &CVec) -> CVec {
        CVec {
            lin: self.lin.component_mul(&u.lin),
            soc: self
                .soc
                .iter()
                .zip(&u.soc)
                .map(|(sc, uk)| (&sc.v * (2.0 * sc.v.dot(uk)) - apply_j(uk)) * sc.eta)
                .collect(),
            psd: self.psd.iter().zip(&u.psd).map(|(sc, m)| &sc.r * m * sc.r.transpose()).collect(),
        }
    }

    /// `W^{-1} u`.
    fn winv(&self, u: &CVec) -> CVec {
        CVec {
            lin: u.lin.component_div(&self.lin),
            soc: self.soc.iter().zip(&u.soc).map(|(sc, uk)| Self::soc_winv(sc, uk)).collect(),
            psd: self.psd.iter().zip(&u.psd).map(|(sc, m)| sc.rinv.transpose() * m * &sc.rinv).collect(),
        }
    }

    fn soc_winv(sc: &SocScale, u: &DVector<f64>) -> DVector<f64> {
        let jv = apply_j(&sc.v);
        (&jv * (2.0 * jv.dot(u)) - apply_j(u)) / sc.eta
    }
}

/// `a o b`.
fn jprod(a: &CVec, b: &CVec) -> CVec {
    CVec {
        lin: a.lin.component_mul(&b.lin),
        soc: a
            .soc
            .iter()
            .zip(&b.soc)
            .map(|(x, y)| {
                let mut r = y.clone() * x[0];
                r.axpy(y[0], x, 1.0);
                r[0] = x.dot(y);
                r
            })
            .collect(),
        psd: a.psd.iter().zip(&b.psd).map(|(x, y)| (x * y + y * x) * 0.5).collect(),
    }
}

/// Solve `lam o u = v` for `u` (`lam` diagonal on PSD blocks).
fn jdiv(lam: &CVec, v: &CVec) -> CVec {
    CVec {
        lin: v.lin.component_div(&lam.lin),
        soc: lam
            .soc
            .iter()
            .zip(&v.soc)
            .map(|(l, vk)| {
                let m = l.len() - 1;
                let l1 = l.rows(1, m);
                let v1 = vk.rows(1, m);
                let den = l[0] * l[0] - l1.norm_squared();
                let u0 = (l[0] * vk[0] - l1.dot(&v1)) / den;
                let mut u = DVector::zeros(l.len());
                u[0] = u0;
                let u1 = (v1 - l1 * u0) / l[0];
                u.rows_mut(1, m).copy_from(&u1);
                u
            })
            .collect(),
        psd: lam
            .psd
            .iter()
            .zip(&v.psd)
            .map(|(l, vk)| {
                let n = l.nrows();
                DMatrix::from_fn(n, n, |i, j| 2.0 * vk[(i, j)] / (l[(i, i)] + l[(j, j)]))
            })
            .collect(),
    }
}

/// Largest `alpha` with `lam + alpha d` in the cone (`lam` interior, diagonal on PSD blocks).
fn max_step(lam: &CVec, d: &CVec) -> f64 {
    let mut inv = 0.0f64; // 1 / alpha_max
    for (l, di) in lam.lin.iter().zip(d.lin.iter()) {
        inv = inv.max(-di / l);
    }
    for (l, dk) in lam.soc.iter().zip(&d.soc) {
        let m = l.len() - 1;
        let nrm = jdot(l, l).sqrt();
        let u = l / nrm;
        let dd = dk / nrm;
        let u1 = u.rows(1, m);
        let d1 = dd.rows(1, m);
        let u1d1 = u1.dot(&d1);
        let w0 = u[0] * dd[0] - u1d1;
        let w1 = d1 - u1 * dd[0] + u1 * (u1d1 / (1.0 + u[0]));
        inv = inv.max(w1.norm() - w0);
    }
    for (l, dk) in lam.psd.iter().zip(&d.psd) {
        let n = l.nrows();
        let s = DVector::from_fn(n, |i, _| 1.0 / l[(i, i)].sqrt());
        let m = DMatrix::from_fn(n, n, |i, j| dk[(i, j)] * s[i] * s[j]);
        let m = (&m + m.transpose()) * 0.5;
        let ev = SymmetricEigen::new(m).eigenvalues;
        inv = inv.max(-ev.min());
    }
    if inv <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / inv
    }
}

/// `max(-min eigenvalue)` over all blocks: the shift needed to enter the cone.
fn cone_shift(v: &CVec) -> f64 {
    let mut t = f64::NEG_INFINITY;
    for &x in v.lin.iter() {
        t = t.max(-x);
    }
    for s in &v.soc {
        let m = s.len() - 1;
        t = t.max(s.rows(1, m).norm() - s[0]);
    }
    for p in &v.psd {
        let sym = (p + p.transpose()) * 0.5;
        t = t.max(-SymmetricEigen::new(sym).eigenvalues.min());
    }
    t
}

fn add_identity(v: &mut CVec, alpha: f64) {
    v.lin.add_scalar_mut(alpha);
    for s in &mut v.soc {
        s[0] += alpha;
    }
    for p in &mut v.psd {
        for i in 0..p.nrows() {
            p[(i, i)] += alpha;
        }
    }
}

// ---------------------------------------------------------------------------
// Reduced KKT system
// ---------------------------------------------------------------------------

enum Factor {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

struct Kkt<'a> {
    sf: &'a StdForm,
    ghat_lin: DMatrix<f64>,
    ghat_soc: Vec<DMatrix<f64>>,
    ghat_psd: Vec<Vec<(usize, Coeff)>>,
    kmat: DMatrix<f64>,
    factor: Factor,
}

impl<'a> Kkt<'a> {
    fn new(sf: &'a StdForm, w: &Scaling) -> Option<Kkt<'a>> {
        let n = sf.n;
        let p = sf.a.nrows();
        let mut ghat_lin = sf.gl.clone();
        for (i, mut row) in ghat_lin.row_iter_mut().enumerate() {
            row.unscale_mut(w.lin[i]);
        }
        let mut h = ghat_lin.tr_mul(&ghat_lin);
        let ghat_soc: Vec<DMatrix<f64>> = sf
            .soc
            .iter()
            .zip(&w.soc)
            .map(|((g, _), sc)| {
                // W^{-1} G = (1/eta)(2 Jv (Jv)'G - J G)
                let jv = apply_j(&sc.v);
                let mut out = g.clone();
                for mut row in out.row_iter_mut().skip(1) {
                    row.neg_mut();
                }
                let vg = jv.tr_mul(g);
                out.ger(2.0, &jv, &vg.transpose(), -1.0);
                out / sc.eta
            })
            .collect();
        for gs in &ghat_soc {
            h.gemm_tr(1.0, gs, gs, 1.0);
        }
        let ghat_psd: Vec<Vec<(usize, Coeff)>> = sf
            .psd
            .iter()
            .zip(&w.psd)
            .map(|(op, sc)| op.terms.iter().map(|(j, c)| (*j, c.congruence(&sc.rinv))).collect())
            .collect();
        for terms in &ghat_psd {
            for a in 0..terms.len() {
                for b in a..terms.len() {
                    let (ja, ca) = &terms[a];
                    let (jb, cb) = &terms[b];
                    let v = coeff_inner(ca, cb);
                    h[(*ja, *jb)] += v;
                    if ja != jb {
                        h[(*jb, *ja)] += v;
                    }
                }
            }
        }
        let hmax = h.diagonal().amax().max(1.0);
        let delta = 1e-13 * hmax;
        let mut kmat = DMatrix::zeros(n + p, n + p);
        kmat.view_mut((0, 0), (n, n)).copy_from(&h);
        kmat.view_mut((n, 0), (p, n)).copy_from(&sf.a);
        kmat.view_mut((0, n), (n, p)).copy_from(&sf.a.transpose());
        let mut reg = kmat.clone();
        for i in 0..n {
            reg[(i, i)] += delta;
        }
        for i in n..n + p {
            reg[(i, i)] -= delta;
        }
        let factor = if p == 0 {
            match Cholesky::new(reg.clone()) {
                Some(c) => Factor::Chol(c),
                None => Factor::Lu(reg.lu()),
            }
        } else {
            Factor::Lu(reg.lu())
        };
        if let Factor::Lu(lu) = &factor {
            if !lu.is_invertible() {
                return None;
            }
        }
        Some(Kkt { sf, ghat_lin, ghat_soc, ghat_psd, kmat, factor })
    }

    fn raw_solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        match &self.factor {
            Factor::Chol(c) => Some(c.solve(rhs)),
            Factor::Lu(l) => l.solve(rhs),
        }
    }

    /// `Ghat' u` with `Ghat = W^{-T} G`.
    fn ghat_t(&self, u: &CVec) -> DVector<f64> {
        let mut out = self.ghat_lin.tr_mul(&u.lin);
        for (g, v) in self.ghat_soc.iter().zip(&u.soc) {
            out += g.tr_mul(v);
        }
        for (terms, m) in self.ghat_psd.iter().zip(&u.psd) {
            for (j, c) in terms {
                out[*j] += c.dot(m);
            }
        }
        out
    }

    fn ghat(&self, x: &DVector<f64>) -> CVec {
        CVec {
            lin: &self.ghat_lin * x,
            soc: self.ghat_soc.iter().map(|g| g * x).collect(),
            psd: self
                .ghat_psd
                .iter()
                .zip(&self.sf.psd)
                .map(|(terms, op)| {
                    let mut m = DMatrix::zeros(op.dim, op.dim);
                    for (j, c) in terms {
                        if x[*j] != 0.0 {
                            c.add_to(x[*j], &mut m);
                        }
                    }
                    m
                })
                .collect(),
        }
    }

    /// Solve `[0 A' G'; A 0 0; G 0 -W'W] [dx; dy; dz] = [r1; r2; r3]` given
    /// `u3 = W^{-T} r3`. Returns `(dx, dy, W dz)`.
    fn solve(&self, r1: &DVector<f64>, r2: &DVector<f64>, u3: &CVec) -> Option<(DVector<f64>, DVector<f64>, CVec)> {
        let (mut dx, mut dy, mut wdz) = self.solve_once(r1, r2, u3)?;
        // Refine against the unreduced system; forming Ghat'Ghat squares
        // its conditioning.
        let scale = r1.amax().max(r2.amax()).max(1e-300);
        for _ in 0..2 {
            let e1 = r1 - self.sf.a.tr_mul(&dy) - self.ghat_t(&wdz);
            let e2 = r2 - &self.sf.a * &dx;
            if e1.amax().max(e2.amax()) <= 1e-15 * scale {
                break;
            }
            let (cx, cy, cz) = self.solve_once(&e1, &e2, &u3.zeros_like())?;
            dx += cx;
            dy += cy;
            wdz.axpy(1.0, &cz);
        }
        Some((dx, dy, wdz))
    }

    fn solve_once(&self, r1: &DVector<f64>, r2: &DVector<f64>, u3: &CVec) -> Option<(DVector<f64>, DVector<f64>, CVec)> {
        let n = self.sf.n;
        let p = r2.len();
        let mut rhs = DVector::zeros(n + p);
        rhs.rows_mut(0, n).copy_from(&(r1 + self.ghat_t(u3)));
        rhs.rows_mut(n, p).copy_from(r2);
        let mut sol = self.raw_solve(&rhs)?;
        for _ in 0..3 {
            let res = &rhs - &self.kmat * &sol;
            if res.amax() <= 1e-15 * rhs.amax().max(1e-300) {
                break;
            }
            sol += self.raw_solve(&res)?;
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let dx = sol.rows(0, n).into_owned();
        let dy = sol.rows(n, p).into_owned();
        let wdz = self.ghat(&dx).sub(u3);
        Some((dx, dy, wdz))
    }
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

struct Iterate {
    x: DVector<f64>,
    y: DVector<f64>,
    s: CVec,
    z: CVec,
    tau: f64,
    kappa: f64,
}

fn failure(prog: &ConicProgram, status: SolveStatus, best: Option<(&Iterate, usize)>) -> ConicSolution {
    match best {
        Some((it, iters)) => {
            let x: Vec<f64> = (&it.x / it.tau).iter().copied().collect();
            let pobj = prog.objective_at(&x);
            ConicSolution {
                status,
                primal_residual: prog.max_violation(&x),
                objective_value: pobj,
                dual_objective: f64::NAN,
                gap: f64::NAN,
                iterations: iters,
                x,
            }
        }
        None => ConicSolution {
            status,
            x: vec![0.0; prog.n_vars],
            objective_value: f64::NAN,
            dual_objective: f64::NAN,
            primal_residual: f64::INFINITY,
            gap: f64::NAN,
            iterations: 0,
        },
    }
}

/// Solve `prog` to tolerance `tol` with the embedded interior-point method.
pub fn solve_ipm(prog: &ConicProgram, tol: f64, opts: &IpmOptions) -> ConicSolution {
    if let Err(e) = prog.validate() {
        debug!("malformed program: {e}");
        return failure(prog, SolveStatus::NumericalFailure, None);
    }
    let sf = StdForm::from_program(prog, opts);
    let nu = sf.degree() as f64;
    let h = sf.h_vec();
    let e = sf.identity();

    // Initial point from two least-squares style KKT solves with W = I.
    let w0 = Scaling::identity(&sf);
    let Some(kkt0) = Kkt::new(&sf, &w0) else {
        return failure(prog, SolveStatus::NumericalFailure, None);
    };
    let zero_n = DVector::zeros(sf.n);
    let Some((x, _, wdz)) = kkt0.solve(&zero_n, &sf.b, &h) else {
        return failure(prog, SolveStatus::NumericalFailure, None);
    };
    let mut s = wdz.scaled(-1.0);
    let Some((_, y, z0)) = kkt0.solve(&(-&sf.c), &DVector::zeros(sf.b.len()), &h.zeros_like()) else {
        return failure(prog, SolveStatus::NumericalFailure, None);
    };
    let mut z = z0;
    let ts = cone_shift(&s);
    if ts >= -1e-8 * s.norm().max(1.0) {
        add_identity(&mut s, 1.0 + ts);
    }
    let tz = cone_shift(&z);
    if tz >= -1e-8 * z.norm().max(1.0) {
        add_identity(&mut z, 1.0 + tz);
    }
    let mut it = Iterate { x, y, s, z, tau: 1.0, kappa: 1.0 };
    drop(kkt0);

    let resx0 = sf.c.norm().max(1.0);
    let resy0 = sf.b.norm().max(1.0);
    let resz0 = h.norm().max(1.0);

    let mut best: Option<(Iterate, usize, f64)> = None;

    for iter in 0..opts.max_iter {
        let gx = sf.g_mul(&it.x);
        let rx = sf.a.tr_mul(&it.y) + sf.gt_mul(&it.z) + &sf.c * it.tau;
        let ry = -(&sf.a * &it.x) + &sf.b * it.tau;
        let mut rz = it.s.clone();
        rz.axpy(1.0, &gx);
        rz.axpy(-it.tau, &h);
        let cx = sf.c.dot(&it.x);
        let by = sf.b.dot(&it.y);
        let hz = h.dot(&it.z);
        let rt = it.kappa + cx + by + hz;

        let sz = it.s.dot(&it.z);
        let mu = (sz + it.tau * it.kappa) / (nu + 1.0);
        let pcost = cx / it.tau;
        let dcost = -(by + hz) / it.tau;
        let gap = sz / (it.tau * it.tau);
        let relgap = if pcost < 0.0 {
            gap / -pcost
        } else if dcost > 0.0 {
            gap / dcost
        } else {
            f64::INFINITY
        };
        let pres = (ry.norm() / resy0).max(rz.norm() / resz0) / it.tau;
        let dres = rx.norm() / resx0 / it.tau;
        trace!("ipm {iter:3} pcost {pcost:+.9e} dcost {dcost:+.9e} gap {gap:.2e} pres {pres:.2e} dres {dres:.2e} tau {:.2e} kappa {:.2e}", it.tau, it.kappa);

        let merit = pres.max(dres).max(relgap.min(gap));
        if best.as_ref().is_none_or(|b| merit < b.2) {
            best = Some((
                Iterate { x: it.x.clone(), y: it.y.clone(), s: it.s.clone(), z: it.z.clone(), tau: it.tau, kappa: it.kappa },
                iter,
                merit,
            ));
        }

        if pres <= tol && dres <= tol && (gap <= tol || relgap <= tol) {
            let x: Vec<f64> = (&it.x / it.tau).iter().copied().collect();
            let viol = prog.max_violation(&x);
            if viol <= tol {
                return ConicSolution {
                    status: SolveStatus::Optimal,
                    objective_value: pcost,
                    dual_objective: dcost,
                    primal_residual: viol,
                    gap,
                    iterations: iter,
                    x,
                };
            }
        }
        // Certificates of infeasibility.
        if hz + by < 0.0 {
            let pinf = (sf.a.tr_mul(&it.y) + sf.gt_mul(&it.z)).norm() / resx0 / -(hz + by);
            if pinf <= tol {
                return failure(prog, SolveStatus::Infeasible, Some((&it, iter)));
            }
        }
        if cx < 0.0 {
            let mut r = gx.clone();
            r.axpy(1.0, &it.s);
            let dinf = ((&sf.a * &it.x).norm() / resy0).max(r.norm() / resz0) / -cx;
            if dinf <= tol {
                return failure(prog, SolveStatus::Unbounded, Some((&it, iter)));
            }
        }

        let Some(w) = Scaling::compute(&it.s, &it.z) else {
            debug!("scaling failed at iteration {iter}");
            break;
        };
        let lam = w.w(&it.z);
        let Some(kkt) = Kkt::new(&sf, &w) else {
            debug!("KKT factorization failed at iteration {iter}");
            break;
        };
        // Constant second solve.
        let Some((x2, y2, wz2)) = kkt.solve(&(-&sf.c), &sf.b, &w.winvt(&h)) else {
            break;
        };
        let z2 = w.winv(&wz2);
        let denom2 = cx2_by2_hz2(&sf, &h, &x2, &y2, &z2) - it.kappa / it.tau;

        let rz_scaled = w.winvt(&rz);
        let step_dir = |sigma: f64, dsz: &CVec, dtk: f64| -> Option<(DVector<f64>, DVector<f64>, CVec, CVec, f64, f64, CVec)> {
            let theta = 1.0 - sigma;
            let mut u3 = rz_scaled.scaled(-theta);
            u3.axpy(-1.0, dsz);
            let (x1, y1, wz1) = kkt.solve(&(-&rx * theta), &(&ry * theta), &u3)?;
            let z1 = w.winv(&wz1);
            let num = -theta * rt - dtk / it.tau - cx2_by2_hz2(&sf, &h, &x1, &y1, &z1);
            let dtau = num / denom2;
            let dx = x1 + &x2 * dtau;
            let dy = y1 + &y2 * dtau;
            let mut wdz = wz1;
            wdz.axpy(dtau, &wz2);
            let dkappa = (dtk - it.kappa * dtau) / it.tau;
            // W^{-T} ds = dsz - W dz
            let wds = dsz.sub(&wdz);
            Some((dx, dy, wdz, wds, dtau, dkappa, z1))
        };

        // Affine (predictor) direction.
        let dsz_aff = lam.scaled(-1.0);
        let Some((_, _, wdz_a, wds_a, dtau_a, dkappa_a, _)) = step_dir(0.0, &dsz_aff, -it.tau * it.kappa) else {
            break;
        };
        let mut alpha_aff = max_step(&lam, &wds_a).min(max_step(&lam, &wdz_a)).min(1.0);
        if dtau_a < 0.0 {
            alpha_aff = alpha_aff.min(-it.tau / dtau_a);
        }
        if dkappa_a < 0.0 {
            alpha_aff = alpha_aff.min(-it.kappa / dkappa_a);
        }
        let sigma = (1.0 - alpha_aff).clamp(0.0, 1.0).powi(3);

        // Combined direction.
        let corr = jprod(&wds_a, &wdz_a);
        let mut target = e.scaled(sigma * mu);
        target.axpy(-1.0, &corr);
        let mut dsz = lam.scaled(-1.0);
        dsz.axpy(1.0, &jdiv(&lam, &target));
        let dtk = -it.tau * it.kappa + sigma * mu - dtau_a * dkappa_a;
        let Some((dx, dy, wdz, wds, dtau, dkappa, _)) = step_dir(sigma, &dsz, dtk) else {
            break;
        };
        let mut amax = max_step(&lam, &wds).min(max_step(&lam, &wdz));
        if dtau < 0.0 {
            amax = amax.min(-it.tau / dtau);
        }
        if dkappa < 0.0 {
            amax = amax.min(-it.kappa / dkappa);
        }
        let alpha = (opts.step_fraction * amax).min(1.0);
        if !(alpha > 1e-14) {
            debug!("step length collapsed at iteration {iter}");
            break;
        }
        let ds = w.wt(&wds);
        let dz = w.winv(&wdz);
        it.x.axpy(alpha, &dx, 1.0);
        it.y.axpy(alpha, &dy, 1.0);
        it.s.axpy(alpha, &ds);
        it.z.axpy(alpha, &dz);
        it.tau += alpha * dtau;
        it.kappa += alpha * dkappa;
        for m in it.s.psd.iter_mut().chain(it.z.psd.iter_mut()) {
            let t = m.transpose();
            *m += t;
            *m *= 0.5;
        }
        if !(it.tau > 0.0 && it.kappa > 0.0) {
            break;
        }
    }

    // No clean termination: report the best iterate seen.
    let (status, best) = match &best {
        Some((b, iters, _)) => {
            let st = if *iters + 1 >= opts.max_iter { SolveStatus::IterationLimit } else { SolveStatus::NumericalFailure };
            (st, Some((b, *iters)))
        }
        None => (SolveStatus::NumericalFailure, None),
    };
    let mut sol = failure(prog, status, best);
    if let Some((b, _)) = best {
        let hz = h.dot(&b.z);
        sol.dual_objective = -(sf.b.dot(&b.y) + hz) / b.tau;
        sol.gap = b.s.dot(&b.z) / (b.tau * b.tau);
    }
    sol
}

fn cx2_by2_hz2(sf: &StdForm, h: &CVec, x: &DVector<f64>, y: &DVector<f64>, z: &CVec) -> f64 {
    sf.c.dot(x) + sf.b.dot(y) + h.dot(z)
}
