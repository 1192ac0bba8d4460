//! Worst-case power minimization under norm-bounded CSI errors.
//!
//! The useful signal power is replaced by a first-order lower bound that is
//! quadratic in the stacked error `z = [dh; vec(dG^*)]`, which the S-procedure
//! turns into one LMI per user. The interference constraint is handled with
//! the sign-definiteness lemma. Precoder and reflection vector are optimized
//! alternately; unit modulus goes through the penalty CCP.

use std::time::Instant;

use irsrob_conic::{
    embed_hermitian_lmi, probe_hermitian, probe_scalar, probe_vector, solve, ConicProgram, LinearExpr, SocBlock,
};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ccp::{penalty_ccp, CcpOutcome, CcpProblem, PenaltyCcpParams};
use crate::channel_model::{ErrorModel, EstimatedChannels, QosSpec};
use crate::design::{step_status, AoOptions, AoOutcome, AoStatus, AoTrace, PrecoderStep, StepStatus};
use crate::linalg::{kron_vec, others, random_phases};
use crate::{BeamformingSolution, CMat, CVec, DesignError, Scenario, ScaledProblem};

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Quadratic lower bound `z^H A z + 2 Re{w^H z} + scalar` of the useful power.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateCoefficients {
    pub a: CMat,
    pub w: CVec,
    pub scalar: f64,
}

pub type Lemma3Coefficients = SurrogateCoefficients;
pub type Lemma4Coefficients = SurrogateCoefficients;

impl SurrogateCoefficients {
    pub fn eval(&self, z: &CVec) -> f64 {
        (z.adjoint() * &self.a * z)[(0, 0)].re + 2.0 * self.w.dotc(z).re + self.scalar
    }
}

/// Stack `[dh; vec(dG^*)]` (column-major vec). `dh = None` gives the cascaded part only.
pub fn error_vector(dh: Option<&CVec>, dg: &CMat) -> CVec {
    let nh = dh.map_or(0, |v| v.len());
    let mut z = CVec::zeros(nh + dg.len());
    if let Some(v) = dh {
        z.rows_mut(0, nh).copy_from(v);
    }
    for (i, g) in dg.iter().enumerate() {
        z[nh + i] = g.conj();
    }
    z
}

fn surrogate(
    f: &CVec,
    e: &CVec,
    f_prev: &CVec,
    e_prev: &CVec,
    h: &CVec,
    g: &CMat,
    with_h: bool,
    with_g: bool,
) -> SurrogateCoefficients {
    let stack = |f: &CVec, e: &CVec| {
        let mut parts: Vec<Complex64> = Vec::new();
        if with_h {
            parts.extend(f.iter());
        }
        if with_g {
            parts.extend(kron_vec(f, &e.map(|z| z.conj())).iter());
        }
        CVec::from_vec(parts)
    };
    let r = stack(f, e);
    let rn = stack(f_prev, e_prev);
    let c1 = (h + g.adjoint() * e_prev).dotc(f_prev);
    let c2 = (h + g.adjoint() * e).dotc(f);
    let a = &r * rn.adjoint() + &rn * r.adjoint() - &rn * rn.adjoint();
    let w = &r * c1.conj() + &rn * (c2.conj() - c1.conj());
    let scalar = 2.0 * (c1.conj() * c2).re - c1.norm_sqr();
    SurrogateCoefficients { a, w, scalar }
}

/// Cascaded-error surrogate (direct channel exact), dimension `MN`.
pub fn lemma3_coefficients(
    f: &CVec,
    e: &CVec,
    f_prev: &CVec,
    e_prev: &CVec,
    h: &CVec,
    g_hat: &CMat,
) -> Lemma3Coefficients {
    surrogate(f, e, f_prev, e_prev, h, g_hat, false, true)
}

/// Surrogate with both direct and cascaded errors, dimension `N + MN`.
pub fn lemma4_coefficients(
    f: &CVec,
    e: &CVec,
    f_prev: &CVec,
    e_prev: &CVec,
    h_hat: &CVec,
    g_hat: &CMat,
) -> Lemma4Coefficients {
    surrogate(f, e, f_prev, e_prev, h_hat, g_hat, true, true)
}

/// Scalars entering the signal LMI.
#[derive(Clone, Copy, Debug, Default)]
pub struct SignalLmiParams {
    pub beta: f64,
    pub gamma: f64,
    pub varpi_h: f64,
    pub varpi_g: f64,
    pub xi_h: f64,
    pub xi_g: f64,
    /// Slack of the reflection subproblem, 0 in the precoder step.
    pub alpha: f64,
}

/// `[[A + diag(varpi_h I, varpi_g I), w], [w^H, scalar - gamma beta - varpi xi^2 - alpha]]`.
///
/// The first `n_h` error coordinates belong to the direct channel.
pub fn signal_lmi_matrix(c: &SurrogateCoefficients, n_h: usize, p: &SignalLmiParams) -> CMat {
    let d = c.w.len();
    let mut out = CMat::zeros(d + 1, d + 1);
    out.view_mut((0, 0), (d, d)).copy_from(&c.a);
    for i in 0..d {
        out[(i, i)] += if i < n_h { p.varpi_h } else { p.varpi_g };
        out[(i, d)] = c.w[i];
        out[(d, i)] = c.w[i].conj();
    }
    let mut corner = c.scalar - p.gamma * p.beta - p.alpha;
    if n_h > 0 {
        corner -= p.varpi_h * p.xi_h * p.xi_h;
    }
    if d > n_h {
        corner -= p.varpi_g * p.xi_g * p.xi_g;
    }
    out[(d, d)] = corner.into();
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InLmiForm {
    /// Corner, interference row and the multiplier blocks.
    Full,
    /// Only the `K x K` top-left block.
    Reduced,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct InLmiParams {
    pub beta: f64,
    pub noise: f64,
    pub mu_g: f64,
    pub mu_h: f64,
    pub xi_g: f64,
    pub xi_h: f64,
    /// Number of IRS elements (`||e||^2`).
    pub m: usize,
}

/// Worst-case interference LMI. `t_hat = F_{-k}^H (h + G^H e)`; a zero
/// radius drops the corresponding multiplier block.
pub fn in_lmi_matrix(t_hat: &CVec, f_minus: &CMat, p: &InLmiParams, form: InLmiForm) -> CMat {
    let kk = t_hat.len();
    let n = f_minus.nrows();
    let blocks: Vec<f64> = match form {
        InLmiForm::Full => [p.xi_g, p.xi_h].into_iter().filter(|&x| x > 0.0).collect(),
        InLmiForm::Reduced => Vec::new(),
    };
    let mus: Vec<f64> = [(p.xi_g, p.mu_g), (p.xi_h, p.mu_h)].iter().filter(|(x, _)| *x > 0.0).map(|t| t.1).collect();
    let dim = 1 + kk + n * blocks.len();
    let mut out = CMat::zeros(dim, dim);
    let mut corner = p.beta - p.noise;
    if p.xi_g > 0.0 {
        corner -= p.mu_g * p.m as f64;
    }
    if p.xi_h > 0.0 {
        corner -= p.mu_h;
    }
    out[(0, 0)] = corner.into();
    for i in 0..kk {
        out[(1 + i, 0)] = t_hat[i];
        out[(0, 1 + i)] = t_hat[i].conj();
        out[(1 + i, 1 + i)] = ONE;
    }
    for (b, (&xi, &mu)) in blocks.iter().zip(&mus).enumerate() {
        let off = 1 + kk + b * n;
        for r in 0..n {
            out[(off + r, off + r)] = mu.into();
            for c in 0..kk {
                let v = f_minus[(r, c)] * xi;
                out[(off + r, 1 + c)] = v;
                out[(1 + c, off + r)] = v.conj();
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Program assembly

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Precoder,
    Reflect,
}

struct Alloc(usize);

impl Alloc {
    fn take(&mut self, n: usize) -> usize {
        let s = self.0;
        self.0 += n;
        s
    }
    fn opt(&mut self, on: bool) -> Option<usize> {
        on.then(|| self.take(1))
    }
}

struct UserVars {
    beta: usize,
    varpi_g: Option<usize>,
    varpi_h: Option<usize>,
    mu_g: Option<usize>,
    mu_h: Option<usize>,
    alpha: Option<usize>,
}

struct Layout {
    n_vars: usize,
    var_base: usize,
    t: Option<usize>,
    users: Vec<UserVars>,
}

fn read_f(x: &DVector<f64>, base: usize, n: usize, k: usize) -> CMat {
    CMat::from_fn(n, k, |i, j| Complex64::new(x[base + 2 * (j * n + i)], x[base + 2 * (j * n + i) + 1]))
}

fn read_e(x: &DVector<f64>, base: usize, m: usize) -> CVec {
    CVec::from_fn(m, |i, _| Complex64::new(x[base + 2 * i], x[base + 2 * i + 1]))
}

fn has_g(prob: &ScaledProblem, k: usize) -> bool {
    prob.m > 0 && prob.xi_g[k] > 0.0
}

fn has_h(prob: &ScaledProblem, scn: Scenario, k: usize) -> bool {
    scn == Scenario::Fcu && prob.xi_h[k] > 0.0
}

fn val(x: &DVector<f64>, i: Option<usize>) -> f64 {
    i.map_or(0.0, |i| x[i])
}

/// Robust program with either the precoder or the reflection vector free.
///
/// `f_fix`/`e_fix` give the value of the block that is not optimized;
/// `(f_lin, e_lin)` is the surrogate expansion point.
#[allow(clippy::too_many_arguments)]
fn build_program(
    prob: &ScaledProblem,
    scn: Scenario,
    role: Role,
    f_fix: &CMat,
    e_fix: &CVec,
    f_lin: &CMat,
    e_lin: &CVec,
    form: InLmiForm,
) -> Result<(ConicProgram, Layout), DesignError> {
    let (n, m, kk) = (prob.n, prob.m, prob.k);
    let mut al = Alloc(0);
    let var_base = match role {
        Role::Precoder => al.take(2 * n * kk),
        Role::Reflect => al.take(2 * m),
    };
    let t = al.opt(role == Role::Precoder);
    let users: Vec<UserVars> = (0..kk)
        .map(|k| UserVars {
            beta: al.take(1),
            varpi_g: al.opt(has_g(prob, k)),
            varpi_h: al.opt(has_h(prob, scn, k)),
            mu_g: al.opt(kk > 1 && has_g(prob, k)),
            mu_h: al.opt(kk > 1 && has_h(prob, scn, k)),
            alpha: al.opt(role == Role::Reflect),
        })
        .collect();
    let lay = Layout { n_vars: al.0, var_base, t, users };
    let mut prog = ConicProgram::new(lay.n_vars);

    let point = |x: &DVector<f64>| -> (CMat, CVec) {
        match role {
            Role::Precoder => (read_f(x, var_base, n, kk), e_fix.clone()),
            Role::Reflect => (f_fix.clone(), read_e(x, var_base, m)),
        }
    };
    let f_vars = |cols: &[usize]| -> Vec<usize> {
        cols.iter().flat_map(|&c| (0..2 * n).map(move |i| var_base + 2 * n * c + i)).collect()
    };
    let e_vars: Vec<usize> = (0..2 * m).map(|i| var_base + i).collect();

    if let Some(t) = lay.t {
        prog.objective[t] = 1.0;
        prog.add_soc(SocBlock { t: LinearExpr::var(t), u: (0..2 * n * kk).map(|i| LinearExpr::var(var_base + i)).collect() });
    }

    for k in 0..kk {
        let u = &lay.users[k];
        let (wh, wg) = (has_h(prob, scn, k), has_g(prob, k));
        let n_h = if wh { n } else { 0 };
        let mut scalars: Vec<usize> = vec![u.beta];
        scalars.extend(u.varpi_g.iter().chain(&u.varpi_h).chain(&u.alpha));
        let mut vars = match role {
            Role::Precoder => f_vars(&[k]),
            Role::Reflect => e_vars.clone(),
        };
        vars.extend(&scalars);
        let (h, g) = (&prob.h[k], &prob.g[k]);
        let basis = match role {
            Role::Precoder => signal_basis_precoder(e_fix, n, wh, wg),
            Role::Reflect => signal_basis_reflect(&f_fix.column(k).into(), m, wh, wg),
        };
        let sig = |x: &DVector<f64>| {
            let (f, e) = point(x);
            let c = surrogate(&f.column(k).into(), &e, &f_lin.column(k).into(), e_lin, h, g, wh, wg);
            let p = SignalLmiParams {
                beta: x[u.beta],
                gamma: prob.gamma[k],
                varpi_h: val(x, u.varpi_h),
                varpi_g: val(x, u.varpi_g),
                xi_h: prob.xi_h[k],
                xi_g: prob.xi_g[k],
                alpha: val(x, u.alpha),
            };
            let full = signal_lmi_matrix(&c, n_h, &p);
            match &basis {
                Some(t) => t.adjoint() * full * t,
                None => full,
            }
        };
        if wh || wg {
            let form_k = probe_hermitian(lay.n_vars, &vars, sig);
            prog.add_psd(embed_hermitian_lmi(&form_k).map_err(|e| DesignError::Solver(e.to_string()))?);
        } else {
            prog.add_ge_zero(&probe_scalar(lay.n_vars, &vars, |x| sig(x)[(0, 0)].re));
        }
        for v in u.varpi_g.iter().chain(&u.varpi_h).chain(&u.mu_g).chain(&u.mu_h).chain(&u.alpha) {
            prog.add_ge_zero(&LinearExpr::var(*v));
        }

        if kk == 1 {
            prog.add_ge_zero(&LinearExpr::var(u.beta).plus(&LinearExpr::constant(-1.0)));
            continue;
        }
        let rest: Vec<usize> = (0..kk).filter(|&j| j != k).collect();
        let mut vars = match role {
            Role::Precoder => f_vars(&rest),
            Role::Reflect => e_vars.clone(),
        };
        vars.push(u.beta);
        vars.extend(u.mu_g.iter().chain(&u.mu_h));
        let xi_h = if wh { prob.xi_h[k] } else { 0.0 };
        let xi_g = if wg { prob.xi_g[k] } else { 0.0 };
        let inl = |x: &DVector<f64>| {
            let (f, e) = point(x);
            let fm = others(&f, k);
            let t_hat = fm.adjoint() * (h + g.adjoint() * &e);
            let p = InLmiParams {
                beta: x[u.beta],
                noise: 1.0,
                mu_g: val(x, u.mu_g),
                mu_h: val(x, u.mu_h),
                xi_g,
                xi_h,
                m,
            };
            in_lmi_matrix(&t_hat, &fm, &p, form)
        };
        let form_k = probe_hermitian(lay.n_vars, &vars, inl);
        prog.add_psd(embed_hermitian_lmi(&form_k).map_err(|e| DesignError::Solver(e.to_string()))?);
    }
    Ok((prog, lay))
}

/// Block-diagonal `[Q_h, Q_g, 1]` holding every `r` and `r_n` that the
/// surrogate can produce in the precoder step (`e` fixed). The signal LMI is
/// `diag(varpi_h I, varpi_g I)` on the orthogonal complement, so compressing
/// it onto this subspace is exact given `varpi >= 0`.
pub fn signal_basis_precoder(e: &CVec, n: usize, wh: bool, wg: bool) -> Option<CMat> {
    let en = e.norm();
    if wg && !(en > 0.0) {
        return None;
    }
    let ec = e.map(|z| z.conj()) / Complex64::from(en);
    let mut cols: Vec<CVec> = Vec::new();
    let dh = if wh { n } else { 0 };
    let dg = if wg { n * e.len() } else { 0 };
    for i in 0..n {
        if wh {
            let mut v = CVec::zeros(dh + dg + 1);
            v[i] = ONE;
            cols.push(v);
        }
    }
    if wg {
        for i in 0..n {
            let mut u = CVec::zeros(n);
            u[i] = ONE;
            let mut v = CVec::zeros(dh + dg + 1);
            v.rows_mut(dh, dg).copy_from(&kron_vec(&u, &ec));
            cols.push(v);
        }
    }
    let mut last = CVec::zeros(dh + dg + 1);
    last[dh + dg] = ONE;
    cols.push(last);
    Some(CMat::from_columns(&cols))
}

/// Reflection-step counterpart of [`signal_basis_precoder`] (`f_k` fixed).
pub fn signal_basis_reflect(f: &CVec, m: usize, wh: bool, wg: bool) -> Option<CMat> {
    let n = f.len();
    let fnorm = f.norm();
    if !(fnorm > 0.0) {
        return None;
    }
    let fu = f / Complex64::from(fnorm);
    let dh = if wh { n } else { 0 };
    let dg = if wg { n * m } else { 0 };
    let mut cols: Vec<CVec> = Vec::new();
    if wh {
        let mut v = CVec::zeros(dh + dg + 1);
        v.rows_mut(0, n).copy_from(&fu);
        cols.push(v);
    }
    if wg {
        for j in 0..m {
            let mut u = CVec::zeros(m);
            u[j] = ONE;
            let mut v = CVec::zeros(dh + dg + 1);
            v.rows_mut(dh, dg).copy_from(&kron_vec(&fu, &u));
            cols.push(v);
        }
    }
    let mut last = CVec::zeros(dh + dg + 1);
    last[dh + dg] = ONE;
    cols.push(last);
    Some(CMat::from_columns(&cols))
}

/// Nominal (zero-error) power minimizer at a fixed reflection vector:
/// `Re(h_eff^H f_k) >= sqrt(gamma) ||[h_eff^H F_{-k}, 1]||`, `Im = 0`.
pub fn nominal_precoder(prob: &ScaledProblem, e: &CVec, tol: f64) -> Result<PrecoderStep, DesignError> {
    let (n, kk) = (prob.n, prob.k);
    let nv = 2 * n * kk + 1;
    let t = nv - 1;
    let mut prog = ConicProgram::new(nv);
    prog.objective[t] = 1.0;
    prog.add_soc(SocBlock { t: LinearExpr::var(t), u: (0..2 * n * kk).map(LinearExpr::var).collect() });
    let all: Vec<usize> = (0..2 * n * kk).collect();
    for k in 0..kk {
        let heff = prob.h_eff(k, e);
        let gains = |x: &DVector<f64>| {
            let f = read_f(x, 0, n, kk);
            f.adjoint() * &heff
        };
        let sg = prob.gamma[k].sqrt();
        let lhs = probe_scalar(nv, &all, |x| gains(x)[k].re / sg);
        let im = probe_scalar(nv, &all, |x| gains(x)[k].im);
        prog.add_eq_zero(&im);
        let mut u = probe_vector(nv, &all, |x| {
            let gk = gains(x);
            let mut v = Vec::new();
            for j in (0..kk).filter(|&j| j != k) {
                v.push(gk[j].re);
                v.push(gk[j].im);
            }
            DVector::from_vec(v)
        });
        u.push(LinearExpr::constant(1.0));
        prog.add_soc(SocBlock { t: lhs, u });
    }
    let sol = solve(&prog, tol);
    let status = step_status(&sol);
    if !status.accepted() {
        return Err(if status == StepStatus::Infeasible { DesignError::Infeasible } else { DesignError::Solver(format!("{:?}", sol.status)) });
    }
    let f = read_f(&DVector::from_column_slice(&sol.x), 0, n, kk);
    Ok(PrecoderStep { power: prob.power(&f), beta: vec![0.0; kk], f, status })
}

/// Robust precoder step at fixed `e`, linearized at `(f_lin, e)`. Works in
/// scaled units; `f` in the result is scaled as well.
pub fn solve_precoder_bounded(
    scn: Scenario,
    prob: &ScaledProblem,
    f_lin: &CMat,
    e: &CVec,
    tol: f64,
) -> Result<PrecoderStep, DesignError> {
    let (prog, lay) = build_program(prob, scn, Role::Precoder, f_lin, e, f_lin, e, InLmiForm::Full)?;
    let sol = solve(&prog, tol);
    let status = step_status(&sol);
    let x = DVector::from_column_slice(&sol.x);
    let f = read_f(&x, lay.var_base, prob.n, prob.k);
    let beta = lay.users.iter().map(|u| x[u.beta]).collect();
    Ok(PrecoderStep { power: prob.power(&f), f, beta, status })
}

/// Reflection step at fixed `f` (scaled), expanded at `(f, e)`.
pub fn solve_reflect_bounded<R: rand::Rng + ?Sized>(
    scn: Scenario,
    prob: &ScaledProblem,
    f: &CMat,
    e: &CVec,
    params: &PenaltyCcpParams,
    form: InLmiForm,
    rng: &mut R,
    tol: f64,
) -> Result<CcpOutcome, DesignError> {
    let (prog, lay) = build_program(prob, scn, Role::Reflect, f, e, f, e, form)?;
    let alpha = lay.users.iter().filter_map(|u| u.alpha).collect();
    let p = CcpProblem { program: prog, e_base: lay.var_base, m: prob.m, alpha, alpha_unit: crate::ccp::signal_sensitivity(prob, f, e, false) };
    Ok(penalty_ccp(&p, e, params, rng, tol))
}

/// Alternating optimization for the bounded error model.
pub fn ao_bounded(
    scn: Scenario,
    est: &EstimatedChannels,
    model: &ErrorModel,
    qos: &QosSpec,
    init_seed: u64,
    opts: &AoOptions,
) -> Result<AoOutcome, DesignError> {
    opts.ccp.validate().map_err(DesignError::Solver)?;
    let prob = ScaledProblem::new(est, model, qos);
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    let mut trace = AoTrace::default();
    let clock = Instant::now();

    let mut start = None;
    for attempt in 0..=opts.start_restarts {
        let e0 = random_phases(&mut rng, prob.m);
        let Ok(f0) = nominal_precoder(&prob, &e0, opts.solver_tol) else {
            continue;
        };
        let step = solve_precoder_bounded(scn, &prob, &f0.f, &e0, opts.solver_tol)?;
        if step.status.accepted() {
            trace.start_restarts = attempt;
            start = Some((step, e0));
            break;
        }
        log::debug!("bounded start {attempt}: precoder step {:?}", step.status);
    }
    let Some((mut cur, mut e)) = start else {
        return Err(DesignError::Infeasible);
    };
    trace.power.push(cur.power);
    trace.f_status.push(cur.status);
    trace.iter_ms.push(clock.elapsed().as_secs_f64() * 1e3);

    let mut status = AoStatus::IterationLimit;
    while trace.power.len() < opts.max_iter {
        let t0 = Instant::now();
        let out = solve_reflect_bounded(scn, &prob, &cur.f, &e, &opts.ccp, InLmiForm::Full, &mut rng, opts.solver_tol)?;
        trace.e_status.push(out.status);
        trace.ccp_iterations.push(out.iterations);
        let e_next = if out.status.accepted() { out.e } else { e.clone() };
        let step = solve_precoder_bounded(scn, &prob, &cur.f, &e_next, opts.solver_tol)?;
        trace.f_status.push(step.status);
        if !step.status.accepted() {
            status = AoStatus::Stalled;
            break;
        }
        let prev = cur.power;
        cur = step;
        e = e_next;
        trace.power.push(cur.power);
        trace.iter_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        if (prev - cur.power).abs() < opts.tol * prev.abs() {
            status = AoStatus::Converged;
            break;
        }
    }
    Ok(finish(&prob, cur, e, trace, status, qos))
}

pub(crate) fn finish(
    prob: &ScaledProblem,
    cur: PrecoderStep,
    e: CVec,
    trace: AoTrace,
    status: AoStatus,
    qos: &QosSpec,
) -> AoOutcome {
    let f = prob.to_physical(&cur.f);
    let beta = cur.beta.iter().enumerate().map(|(k, b)| b * qos.noise_power[k]).collect();
    AoOutcome { solution: BeamformingSolution { power: cur.power, f, e }, trace, status, beta }
}
