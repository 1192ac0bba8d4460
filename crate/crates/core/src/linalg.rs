//! Small complex linear-algebra helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{CMat, CVec};

/// Kronecker product of two column vectors, `a (x) b`.
pub fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    let nb = b.len();
    DVector::from_fn(a.len() * nb, |i, _| a[i / nb] * b[i % nb])
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    DMatrix::from_fn(ra * rb, ca * cb, |i, j| a[(i / rb, j / cb)] * b[(i % rb, j % cb)])
}

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn hermitian_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(m.nrows(), idx.len(), |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

pub fn lambda_max(m: &CMat) -> f64 {
    hermitian_eig(m).0.last().copied().unwrap_or(0.0)
}

pub fn lambda_min(m: &CMat) -> f64 {
    hermitian_eig(m).0.first().copied().unwrap_or(0.0)
}

/// Hermitian square root with eigenvalues below zero clamped.
///
/// Eigenvalues down to `-1e-10` are treated as zero; anything more negative
/// is a caller bug and also clamped, but logged.
pub fn psd_sqrt(m: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eig(m);
    if let Some(&v) = vals.first() {
        if v < -1e-10 * vals.last().unwrap().abs().max(1.0) {
            log::debug!("psd_sqrt: clamping eigenvalue {v:e}");
        }
    }
    let d = DVector::from_iterator(vals.len(), vals.iter().map(|&v| Complex64::new(v.max(0.0).sqrt(), 0.0)));
    &vecs * DMatrix::from_diagonal(&d) * vecs.adjoint()
}

/// `h + G^H e`: the effective channel seen by the BS precoder.
pub fn effective_channel(h: &CVec, g: &CMat, e: &CVec) -> CVec {
    h + g.adjoint() * e
}

/// Precoder with column `k` removed.
pub fn others(f: &CMat, k: usize) -> CMat {
    f.clone().remove_column(k)
}

/// Interleaved `(re, im)` pairs.
pub fn to_real(v: &CVec) -> Vec<f64> {
    v.iter().flat_map(|z| [z.re, z.im]).collect()
}

pub fn from_real(x: &[f64]) -> CVec {
    DVector::from_fn(x.len() / 2, |i, _| Complex64::new(x[2 * i], x[2 * i + 1]))
}

/// Standard circularly-symmetric complex Gaussian sample with variance `var`.
pub fn cn<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

pub fn cn_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, var: f64) -> CVec {
    DVector::from_fn(n, |_, _| cn(rng, var))
}

pub fn cn_mat<R: Rng + ?Sized>(rng: &mut R, r: usize, c: usize, var: f64) -> CMat {
    // Column-major fill so that vec(G) is drawn in order.
    let mut m = DMatrix::zeros(r, c);
    for j in 0..c {
        for i in 0..r {
            m[(i, j)] = cn(rng, var);
        }
    }
    m
}

/// i.i.d. uniform phases.
pub fn random_phases<R: Rng + ?Sized>(rng: &mut R, m: usize) -> CVec {
    DVector::from_fn(m, |_, _| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
}

/// Elementwise projection to unit modulus (zero entries map to 1).
pub fn unit_modulus(e: &CVec) -> CVec {
    e.map(|z| if z.norm() > 0.0 { z / z.norm() } else { Complex64::new(1.0, 0.0) })
}

pub fn frob_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}
