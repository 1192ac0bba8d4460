//! Real conic programs: a linear objective, linear rows, second-order cones
//! and symmetric matrix blocks constrained to be positive semidefinite.
//!
//! All blocks are affine in the decision vector `x`. Complex decision
//! variables are laid out as interleaved `(re, im)` pairs by the callers.

use std::fmt::Write as _;
use std::io;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::ConicError;

/// Sparse affine scalar `constant + sum(coef * x[var])`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl LinearExpr {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, terms: Vec::new() }
    }

    pub fn var(j: usize) -> Self {
        Self { constant: 0.0, terms: vec![(j, 1.0)] }
    }

    pub fn scaled_var(j: usize, a: f64) -> Self {
        Self { constant: 0.0, terms: vec![(j, a)] }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().fold(self.constant, |acc, &(j, a)| acc + a * x[j])
    }

    pub fn add_term(mut self, j: usize, a: f64) -> Self {
        self.terms.push((j, a));
        self
    }

    pub fn plus(mut self, other: &LinearExpr) -> Self {
        self.constant += other.constant;
        self.terms.extend_from_slice(&other.terms);
        self
    }

    pub fn scale(mut self, a: f64) -> Self {
        self.constant *= a;
        for t in &mut self.terms {
            t.1 *= a;
        }
        self
    }

    /// Merge duplicate variable entries and drop exact zeros.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (j, a) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => out.push((j, a)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
        self
    }
}

/// Complex affine scalar stored as two real affine parts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComplexExpr {
    pub re: LinearExpr,
    pub im: LinearExpr,
}

impl ComplexExpr {
    pub fn constant(c: Complex64) -> Self {
        Self { re: LinearExpr::constant(c.re), im: LinearExpr::constant(c.im) }
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        Complex64::new(self.re.eval(x), self.im.eval(x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Ge,
}

/// `coeffs . x  (= | >=)  rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub sense: Sense,
}

impl LinearRow {
    /// Row from an affine expression: `expr (= | >=) 0`.
    pub fn from_expr(expr: &LinearExpr, sense: Sense) -> Self {
        let e = expr.clone().compact();
        Self { coeffs: e.terms, rhs: -e.constant, sense }
    }
}

/// `||u(x)|| <= t(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SocBlock {
    pub t: LinearExpr,
    pub u: Vec<LinearExpr>,
}

/// Symmetric-matrix-valued affine map `C0 + sum x[j] * C_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymAffine {
    pub dim: usize,
    pub constant: DMatrix<f64>,
    pub terms: Vec<(usize, DMatrix<f64>)>,
}

impl SymAffine {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, constant: DMatrix::zeros(dim, dim), terms: Vec::new() }
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut s = self.constant.clone();
        for (j, c) in &self.terms {
            s.as_mut_slice().iter_mut().zip(c.as_slice()).for_each(|(a, b)| *a += x[*j] * b);
        }
        s
    }
}

/// Hermitian-matrix-valued affine map over real variables.
#[derive(Clone, Debug, PartialEq)]
pub struct HermAffine {
    pub dim: usize,
    pub constant: DMatrix<Complex64>,
    pub terms: Vec<(usize, DMatrix<Complex64>)>,
}

impl HermAffine {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, constant: DMatrix::zeros(dim, dim), terms: Vec::new() }
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<Complex64> {
        let mut s = self.constant.clone();
        for (j, c) in &self.terms {
            s += c * Complex64::new(x[*j], 0.0);
        }
        s
    }
}

/// Minimize `objective . x` subject to all blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct ConicProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub linear_rows: Vec<LinearRow>,
    pub soc_blocks: Vec<SocBlock>,
    pub psd_blocks: Vec<SymAffine>,
}

/// Per-block-kind constraint violations of a candidate point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Violation {
    pub linear: f64,
    pub soc: f64,
    pub psd: f64,
}

impl Violation {
    pub fn max(&self) -> f64 {
        self.linear.max(self.soc).max(self.psd)
    }
}

impl ConicProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            linear_rows: Vec::new(),
            soc_blocks: Vec::new(),
            psd_blocks: Vec::new(),
        }
    }

    pub fn add_linear(&mut self, row: LinearRow) {
        self.linear_rows.push(row);
    }

    /// `expr >= 0`.
    pub fn add_ge_zero(&mut self, expr: &LinearExpr) {
        self.linear_rows.push(LinearRow::from_expr(expr, Sense::Ge));
    }

    /// `expr == 0`.
    pub fn add_eq_zero(&mut self, expr: &LinearExpr) {
        self.linear_rows.push(LinearRow::from_expr(expr, Sense::Eq));
    }

    pub fn add_soc(&mut self, block: SocBlock) {
        self.soc_blocks.push(block);
    }

    pub fn add_psd(&mut self, block: SymAffine) {
        self.psd_blocks.push(block);
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Check that every index and matrix shape is consistent.
    pub fn validate(&self) -> Result<(), ConicError> {
        let n = self.n_vars;
        if self.objective.len() != n {
            return Err(ConicError::Shape(format!(
                "objective has length {} but n_vars = {n}",
                self.objective.len()
            )));
        }
        let check = |j: usize, what: &str| {
            if j >= n {
                Err(ConicError::Shape(format!("{what} references variable {j} >= {n}")))
            } else {
                Ok(())
            }
        };
        for row in &self.linear_rows {
            for &(j, _) in &row.coeffs {
                check(j, "linear row")?;
            }
        }
        for b in &self.soc_blocks {
            for e in std::iter::once(&b.t).chain(&b.u) {
                for &(j, _) in &e.terms {
                    check(j, "soc block")?;
                }
            }
        }
        for (i, b) in self.psd_blocks.iter().enumerate() {
            if b.constant.nrows() != b.dim || b.constant.ncols() != b.dim {
                return Err(ConicError::Shape(format!("psd block {i} constant is not {0}x{0}", b.dim)));
            }
            for (j, c) in &b.terms {
                check(*j, "psd block")?;
                if c.nrows() != b.dim || c.ncols() != b.dim {
                    return Err(ConicError::Shape(format!("psd block {i} term {j} has wrong shape")));
                }
            }
        }
        Ok(())
    }

    /// Constraint violations at `x`, each scaled by `max(1, ||block constant||)`.
    pub fn violation(&self, x: &[f64]) -> Violation {
        let mut v = Violation::default();
        for row in &self.linear_rows {
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let r = lhs - row.rhs;
            let scale = row.rhs.abs().max(1.0);
            let bad = match row.sense {
                Sense::Eq => r.abs(),
                Sense::Ge => (-r).max(0.0),
            };
            v.linear = v.linear.max(bad / scale);
        }
        for b in &self.soc_blocks {
            let t = b.t.eval(x);
            let nu: f64 = b.u.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
            let scale = std::iter::once(b.t.constant)
                .chain(b.u.iter().map(|e| e.constant))
                .map(|c| c * c)
                .sum::<f64>()
                .sqrt()
                .max(1.0);
            v.soc = v.soc.max((nu - t).max(0.0) / scale);
        }
        for b in &self.psd_blocks {
            let s = b.eval(x);
            let min_eig = SymmetricEigen::new(s).eigenvalues.min();
            let scale = b.constant.norm().max(1.0);
            v.psd = v.psd.max((-min_eig).max(0.0) / scale);
        }
        v
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.violation(x).max()
    }

    /// Sparse-triplet text dump.
    ///
    /// Sections: `c j value`, `lin row sense rhs` followed by `a row j value`,
    /// `soc block entry j value` (entry 0 is t, constants use j = -1), and
    /// `psd block i k j value` (lower triangle only, j = -1 for the constant).
    pub fn dump_triplets<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "vars {}", self.n_vars);
        for (j, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = writeln!(s, "c {j} {c:e}");
            }
        }
        for (r, row) in self.linear_rows.iter().enumerate() {
            let sense = match row.sense {
                Sense::Eq => "eq",
                Sense::Ge => "ge",
            };
            let _ = writeln!(s, "lin {r} {sense} {:e}", row.rhs);
            for (j, a) in &row.coeffs {
                let _ = writeln!(s, "a {r} {j} {a:e}");
            }
        }
        for (b, blk) in self.soc_blocks.iter().enumerate() {
            for (entry, e) in std::iter::once(&blk.t).chain(&blk.u).enumerate() {
                if e.constant != 0.0 {
                    let _ = writeln!(s, "soc {b} {entry} -1 {:e}", e.constant);
                }
                for (j, a) in &e.terms {
                    let _ = writeln!(s, "soc {b} {entry} {j} {a:e}");
                }
            }
        }
        for (b, blk) in self.psd_blocks.iter().enumerate() {
            let _ = writeln!(s, "psdblock {b} {}", blk.dim);
            let mut emit = |m: &DMatrix<f64>, j: i64| {
                for c in 0..blk.dim {
                    for r in c..blk.dim {
                        let v = m[(r, c)];
                        if v != 0.0 {
                            let _ = writeln!(s, "psd {b} {r} {c} {j} {v:e}");
                        }
                    }
                }
            };
            emit(&blk.constant, -1);
            for (j, m) in &blk.terms {
                emit(m, *j as i64);
            }
        }
        w.write_all(s.as_bytes())
    }
}

fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..=i {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Real symmetric image `[[Re H, -Im H], [Im H, Re H]]` of a Hermitian matrix.
pub fn embed_matrix(h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = h.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            let v = h[(i, j)];
            out[(i, j)] = v.re;
            out[(i + n, j + n)] = v.re;
            out[(i + n, j)] = v.im;
            out[(i, j + n)] = -v.im;
        }
    }
    // Symmetrize exactly so small rounding in the input never leaks through.
    let t = out.transpose();
    (out + t) * 0.5
}

/// Embed a Hermitian affine map into a real symmetric one of twice the size.
pub fn embed_hermitian_lmi(h: &HermAffine) -> Result<SymAffine, ConicError> {
    let tol = |m: &DMatrix<Complex64>| 1e-10 * m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let d = hermitian_defect(&h.constant);
    if d > tol(&h.constant) {
        return Err(ConicError::NotHermitian(format!("constant part off by {d:e}")));
    }
    for (j, c) in &h.terms {
        let d = hermitian_defect(c);
        if d > tol(c) {
            return Err(ConicError::NotHermitian(format!("coefficient of variable {j} off by {d:e}")));
        }
    }
    Ok(SymAffine {
        dim: 2 * h.dim,
        constant: embed_matrix(&h.constant),
        terms: h.terms.iter().map(|(j, c)| (*j, embed_matrix(c))).collect(),
    })
}

/// `[[scalar, v^H], [v, I]] >= 0`, i.e. `||v||^2 <= scalar`, embedded to real form.
pub fn schur_norm_lmi(scalar: &LinearExpr, v: &[ComplexExpr]) -> SymAffine {
    let l = v.len();
    let dim = l + 1;
    let mut h = HermAffine::zeros(dim);
    let mut add = |j: Option<usize>, r: usize, c: usize, z: Complex64| {
        let m = match j {
            None => &mut h.constant,
            Some(j) => {
                let pos = match h.terms.iter().position(|t| t.0 == j) {
                    Some(p) => p,
                    None => {
                        h.terms.push((j, DMatrix::zeros(dim, dim)));
                        h.terms.len() - 1
                    }
                };
                &mut h.terms[pos].1
            }
        };
        m[(r, c)] += z;
        if r != c {
            m[(c, r)] += z.conj();
        }
    };
    add(None, 0, 0, Complex64::new(scalar.constant, 0.0));
    for &(j, a) in &scalar.terms {
        add(Some(j), 0, 0, Complex64::new(a, 0.0));
    }
    for (i, e) in v.iter().enumerate() {
        add(None, i + 1, 0, Complex64::new(e.re.constant, e.im.constant));
        for &(j, a) in &e.re.terms {
            add(Some(j), i + 1, 0, Complex64::new(a, 0.0));
        }
        for &(j, a) in &e.im.terms {
            add(Some(j), i + 1, 0, Complex64::new(0.0, a));
        }
        add(None, i + 1, i + 1, Complex64::new(1.0, 0.0));
    }
    embed_hermitian_lmi(&h).expect("schur block is Hermitian by construction")
}

fn unit(n: usize, j: usize) -> DVector<f64> {
    let mut x = DVector::zeros(n);
    x[j] = 1.0;
    x
}

fn drop_tiny_c(m: DMatrix<Complex64>, reference: f64) -> Option<DMatrix<Complex64>> {
    let mx = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    (mx > 1e-15 * reference).then_some(m)
}

/// Recover the affine Hermitian map `f` from its values at `0` and unit vectors.
///
/// `f` must be affine in the listed variables and independent of all others.
pub fn probe_hermitian<F>(n_vars: usize, vars: &[usize], f: F) -> HermAffine
where
    F: Fn(&DVector<f64>) -> DMatrix<Complex64>,
{
    let c0 = f(&DVector::zeros(n_vars));
    let reference = c0.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let dim = c0.nrows();
    let mut terms = Vec::with_capacity(vars.len());
    for &j in vars {
        let cj = f(&unit(n_vars, j)) - &c0;
        if let Some(cj) = drop_tiny_c(cj, reference) {
            terms.push((j, cj));
        }
    }
    HermAffine { dim, constant: c0, terms }
}

/// Recover a real affine vector map (one `LinearExpr` per output entry).
pub fn probe_vector<F>(n_vars: usize, vars: &[usize], f: F) -> Vec<LinearExpr>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let c0 = f(&DVector::zeros(n_vars));
    let reference = c0.amax().max(1.0);
    let mut out: Vec<LinearExpr> = c0.iter().map(|&c| LinearExpr::constant(c)).collect();
    for &j in vars {
        let cj = f(&unit(n_vars, j)) - &c0;
        for (i, &a) in cj.iter().enumerate() {
            if a.abs() > 1e-15 * reference {
                out[i].terms.push((j, a));
            }
        }
    }
    out
}

/// Recover a real affine scalar map.
pub fn probe_scalar<F>(n_vars: usize, vars: &[usize], f: F) -> LinearExpr
where
    F: Fn(&DVector<f64>) -> f64,
{
    probe_vector(n_vars, vars, |x| DVector::from_element(1, f(x))).remove(0)
}

/// Recover a complex affine vector map (entries become `ComplexExpr`).
pub fn probe_complex_vector<F>(n_vars: usize, vars: &[usize], f: F) -> Vec<ComplexExpr>
where
    F: Fn(&DVector<f64>) -> DVector<Complex64>,
{
    let real = probe_vector(n_vars, vars, |x| {
        let v = f(x);
        let mut out = DVector::zeros(2 * v.len());
        for (i, z) in v.iter().enumerate() {
            out[2 * i] = z.re;
            out[2 * i + 1] = z.im;
        }
        out
    });
    real.chunks(2).map(|c| ComplexExpr { re: c[0].clone(), im: c[1].clone() }).collect()
}

/// Largest deviation between `f(x)` and its probed affine form at `x`.
pub fn affine_defect<F>(form: &HermAffine, x: &DVector<f64>, f: F) -> f64
where
    F: Fn(&DVector<f64>) -> DMatrix<Complex64>,
{
    let direct = f(x);
    let rebuilt = form.eval(x.as_slice());
    (direct - rebuilt).iter().map(|z| z.norm()).fold(0.0, f64::max)
}
