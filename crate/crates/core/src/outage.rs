//! Outage-constrained power minimization under Gaussian CSI errors.
//!
//! With `h_eff = h + G^H e` perturbed by `CN(0, s I)`, the SINR outage
//! constraint is a Gaussian quadratic chance constraint in
//! `Phi_k = Gamma_k / gamma_k - sum_{i != k} Gamma_i`. A Bernstein-type
//! inequality gives a safe convex restriction (trace, second-order cone and
//! shifted-PSD conditions). The precoder step is a semidefinite relaxation
//! followed by a rank-one construction that keeps every constraint.

use std::time::Instant;

use irsrob_conic::{
    embed_hermitian_lmi, probe_hermitian, probe_scalar, probe_vector, solve, ConicProgram, HermAffine, LinearExpr,
    SocBlock, SymAffine,
};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ccp::{penalty_ccp, CcpOutcome, CcpProblem, PenaltyCcpParams};
use crate::channel_model::{ErrorModel, EstimatedChannels, QosSpec};
use crate::design::{step_status, AoOptions, AoOutcome, AoStatus, AoTrace, PrecoderStep, StepStatus};
use crate::linalg::{hermitian_eig, lambda_max, others, psd_sqrt, random_phases};
use crate::{CMat, CVec, DesignError, Scenario, ScaledProblem};

/// `Pr{x^H U x + 2 Re{u^H x} + c >= 0} >= 1 - rho` for `x ~ CN(0, I)`.
#[derive(Clone, Debug)]
pub struct QuadraticChanceForm {
    pub u_mat: CMat,
    pub u_vec: CVec,
    pub c: f64,
    pub rho: f64,
}

/// The three deterministic conditions of the Bernstein-type inequality with
/// slacks `x` and `y`.
#[derive(Clone, Debug)]
pub struct BernsteinBlocks {
    /// `Tr U - sqrt(2 ln(1/rho)) x - ln(1/rho) y + c >= 0`
    pub linear: LinearExpr,
    /// `||[vec U; sqrt(2) u]|| <= x`
    pub soc: SocBlock,
    /// `y I + U >= 0`, embedded.
    pub psd: SymAffine,
    /// `y >= 0`
    pub y_nonneg: LinearExpr,
}

impl BernsteinBlocks {
    pub fn add_to(&self, prog: &mut ConicProgram) {
        prog.add_ge_zero(&self.linear);
        prog.add_soc(self.soc.clone());
        prog.add_psd(self.psd.clone());
        prog.add_ge_zero(&self.y_nonneg);
    }
}

fn bernstein_weights(rho: f64) -> (f64, f64) {
    let l = (1.0 / rho).ln();
    ((2.0 * l).sqrt(), l)
}

/// Conditions for a numeric chance form; `x` and `y` are variable indices.
pub fn bernstein_conditions(form: &QuadraticChanceForm, x: usize, y: usize) -> BernsteinBlocks {
    let (cx, cy) = bernstein_weights(form.rho);
    let tr: f64 = form.u_mat.diagonal().iter().map(|z| z.re).sum();
    let linear = LinearExpr::constant(tr + form.c).add_term(x, -cx).add_term(y, -cy);
    let mut u = Vec::new();
    for z in form.u_mat.iter() {
        u.push(LinearExpr::constant(z.re));
        u.push(LinearExpr::constant(z.im));
    }
    let r2 = 2f64.sqrt();
    for z in form.u_vec.iter() {
        u.push(LinearExpr::constant(r2 * z.re));
        u.push(LinearExpr::constant(r2 * z.im));
    }
    let n = form.u_mat.nrows();
    let mut h = HermAffine::zeros(n);
    h.constant = form.u_mat.clone();
    h.terms.push((y, CMat::identity(n, n)));
    let psd = embed_hermitian_lmi(&h).expect("U must be Hermitian");
    BernsteinBlocks { linear, soc: SocBlock { t: LinearExpr::var(x), u }, psd, y_nonneg: LinearExpr::var(y) }
}

/// Smallest-`x + y` slacks satisfying the conditions, if any.
pub fn bernstein_slacks(form: &QuadraticChanceForm, tol: f64) -> Option<(f64, f64)> {
    let mut prog = ConicProgram::new(2);
    prog.objective = vec![1.0, 1.0];
    bernstein_conditions(form, 0, 1).add_to(&mut prog);
    let sol = solve(&prog, tol);
    step_status(&sol).accepted().then(|| (sol.x[0], sol.x[1]))
}

/// `Phi_k` from a precoder.
pub fn phi_from_precoder(f: &CMat, k: usize, gamma: f64) -> CMat {
    let fk = f.column(k);
    let fm = others(f, k);
    fk * fk.adjoint() / Complex64::from(gamma) - &fm * fm.adjoint()
}

/// `Phi_k` from lifted covariances.
pub fn phi_from_gammas(g: &[CMat], k: usize, gamma: f64) -> CMat {
    let mut phi = &g[k] / Complex64::from(gamma);
    for (i, gi) in g.iter().enumerate() {
        if i != k {
            phi -= gi;
        }
    }
    phi
}

/// Variance of the effective-channel error: `eps_g^2 M` (PCU) or
/// `eps_h^2 + eps_g^2 M` (FCU).
pub fn error_scale(eps_g_sq: f64, eps_h_sq: f64, m: usize, scn: Scenario) -> f64 {
    let g = eps_g_sq * m as f64;
    match scn {
        Scenario::Pcu => g,
        Scenario::Fcu => eps_h_sq + g,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplifiedStats {
    pub s: f64,
    /// `Tr U = s Tr Phi`
    pub trace_term: f64,
    /// `||U||_F = s ||Phi||_F`
    pub frob_term: f64,
    /// Smallest feasible `y`: `max(lambda_max(-s Phi), 0)`.
    pub eig_shift: f64,
}

pub fn simplified_stats(phi: &CMat, eps_g_sq: f64, eps_h_sq: f64, m: usize, scn: Scenario) -> SimplifiedStats {
    let s = error_scale(eps_g_sq, eps_h_sq, m, scn);
    let tr: f64 = phi.diagonal().iter().map(|z| z.re).sum();
    SimplifiedStats {
        s,
        trace_term: s * tr,
        frob_term: s * phi.norm(),
        eig_shift: lambda_max(&(phi * Complex64::from(-s))).max(0.0),
    }
}

/// `sqrt(2) u`, with `||u||^2 = s ||Phi h_eff||^2`.
pub fn soc_vector(phi: &CMat, h_eff: &CVec, s: f64) -> CVec {
    phi * h_eff * Complex64::from((2.0 * s).sqrt())
}

/// Gamma as `N^2` reals: diagonal first, then `(re, im)` of the strict lower triangle.
fn read_gamma(x: &DVector<f64>, base: usize, n: usize) -> CMat {
    let mut g = CMat::zeros(n, n);
    for i in 0..n {
        g[(i, i)] = x[base + i].into();
    }
    let mut p = base + n;
    for j in 0..n {
        for i in j + 1..n {
            let z = Complex64::new(x[p], x[p + 1]);
            g[(i, j)] = z;
            g[(j, i)] = z.conj();
            p += 2;
        }
    }
    g
}

#[derive(Clone, Debug)]
pub struct SdrSolution {
    pub gamma: Vec<CMat>,
    /// `sum_k Tr Gamma_k` in scaled units.
    pub objective: f64,
    pub status: StepStatus,
}

impl SdrSolution {
    /// `lambda_2 / lambda_1` per user.
    pub fn rank_ratios(&self) -> Vec<f64> {
        self.gamma
            .iter()
            .map(|g| {
                let (ev, _) = hermitian_eig(g);
                let n = ev.len();
                if n < 2 || ev[n - 1] <= 0.0 {
                    0.0
                } else {
                    ev[n - 2].max(0.0) / ev[n - 1]
                }
            })
            .collect()
    }
}

/// Relaxed precoder step at fixed `e` (scaled units).
pub fn solve_precoder_outage(scn: Scenario, prob: &ScaledProblem, e: &CVec, tol: f64) -> SdrSolution {
    let (n, kk) = (prob.n, prob.k);
    let nn = n * n;
    let slack = kk * nn;
    let nv = slack + 2 * kk;
    let mut prog = ConicProgram::new(nv);
    for k in 0..kk {
        for i in 0..n {
            prog.objective[k * nn + i] = 1.0;
        }
    }
    let gvars: Vec<usize> = (0..slack).collect();
    let gammas = |x: &DVector<f64>| -> Vec<CMat> { (0..kk).map(|k| read_gamma(x, k * nn, n)).collect() };
    for k in 0..kk {
        let (xv, yv) = (slack + 2 * k, slack + 2 * k + 1);
        let s = error_scale(prob.eps_g_sq[k], prob.eps_h_sq[k], prob.m, scn);
        let (cx, cy) = bernstein_weights(prob.rho[k]);
        let heff = prob.h_eff(k, e);
        let gk = prob.gamma[k];
        let phi = |x: &DVector<f64>| phi_from_gammas(&gammas(x), k, gk);

        let lin = probe_scalar(nv, &gvars, |x| {
            let p = phi(x);
            let tr: f64 = p.diagonal().iter().map(|z| z.re).sum();
            s * tr + heff.dotc(&(&p * &heff)).re - 1.0
        });
        prog.add_ge_zero(&lin.add_term(xv, -cx).add_term(yv, -cy));

        if s > 0.0 {
            let u = probe_vector(nv, &gvars, |x| {
                let p = phi(x);
                let v = soc_vector(&p, &heff, s);
                let mut out = Vec::with_capacity(2 * (nn + n));
                for z in p.iter().chain(v.iter()) {
                    out.push(z.re);
                    out.push(z.im);
                }
                let mut out = DVector::from_vec(out);
                out.rows_mut(0, 2 * nn).scale_mut(s);
                out
            });
            prog.add_soc(SocBlock { t: LinearExpr::var(xv), u });
            let mut vars = gvars.clone();
            vars.push(yv);
            let shifted = probe_hermitian(nv, &vars, |x| {
                let mut p = phi(x) * Complex64::from(s);
                for i in 0..n {
                    p[(i, i)] += x[yv];
                }
                p
            });
            prog.add_psd(embed_hermitian_lmi(&shifted).expect("Hermitian by construction"));
        } else {
            prog.add_ge_zero(&LinearExpr::var(xv));
        }
        prog.add_ge_zero(&LinearExpr::var(yv));
        let own: Vec<usize> = (k * nn..(k + 1) * nn).collect();
        let psd = probe_hermitian(nv, &own, |x| read_gamma(x, k * nn, n));
        prog.add_psd(embed_hermitian_lmi(&psd).expect("Hermitian by construction"));
    }
    let sol = solve(&prog, tol);
    let x = DVector::from_column_slice(&sol.x);
    SdrSolution { gamma: gammas(&x), objective: sol.objective_value, status: step_status(&sol) }
}

#[derive(Clone, Debug)]
pub struct RankOne {
    pub f: CMat,
    pub gamma_tilde: Vec<CMat>,
}

/// `Gamma_tilde_k = Gamma^{1/2} P Gamma^{1/2}` with `P` the projector onto
/// `Gamma^{1/2} h_k`; it is rank one, `f_k` is its factor.
pub fn rank_one_extract(gamma: &[CMat], h_eff: &[CVec]) -> Result<RankOne, DesignError> {
    let n = gamma.first().map_or(0, |g| g.nrows());
    let mut f = CMat::zeros(n, gamma.len());
    let mut tilde = Vec::with_capacity(gamma.len());
    for (k, (g, h)) in gamma.iter().zip(h_eff).enumerate() {
        let root = psd_sqrt(g);
        let v = &root * h;
        let nv = v.norm();
        if nv < 1e-12 {
            return Err(DesignError::DegenerateChannel(k));
        }
        let u = &root * v / Complex64::from(nv);
        tilde.push(&u * u.adjoint());
        f.set_column(k, &u);
    }
    Ok(RankOne { f, gamma_tilde: tilde })
}

/// Reflection step at fixed precoder (scaled units), linearized at `e`.
#[allow(clippy::too_many_arguments)]
pub fn solve_reflect_outage<R: rand::Rng + ?Sized>(
    scn: Scenario,
    prob: &ScaledProblem,
    f: &CMat,
    e: &CVec,
    params: &PenaltyCcpParams,
    rng: &mut R,
    tol: f64,
) -> CcpOutcome {
    let (m, kk) = (prob.m, prob.k);
    let ev: Vec<usize> = (0..2 * m).collect();
    // e, then per user alpha, x, tau
    let per = 3;
    let nv = 2 * m + per * kk;
    let mut prog = ConicProgram::new(nv);
    let read = |x: &DVector<f64>| CVec::from_fn(m, |i, _| Complex64::new(x[2 * i], x[2 * i + 1]));
    let mut alphas = Vec::with_capacity(kk);
    for k in 0..kk {
        let (av, xv, tv) = (2 * m + per * k, 2 * m + per * k + 1, 2 * m + per * k + 2);
        alphas.push(av);
        let s = error_scale(prob.eps_g_sq[k], prob.eps_h_sq[k], m, scn);
        let (cx, cy) = bernstein_weights(prob.rho[k]);
        let phi = phi_from_precoder(f, k, prob.gamma[k]);
        let st = simplified_stats(&phi, prob.eps_g_sq[k], prob.eps_h_sq[k], m, scn);
        let (h, g) = (&prob.h[k], &prob.g[k]);
        let fk: CVec = f.column(k).into();
        let fm = others(f, k);
        let x_n = (h + g.adjoint() * e).dotc(&fk);
        let sig = probe_scalar(nv, &ev, |x| {
            let xv = (h + g.adjoint() * read(x)).dotc(&fk);
            (2.0 * (x_n.conj() * xv).re - x_n.norm_sqr()) / prob.gamma[k]
        });
        let mut lin = sig
            .plus(&LinearExpr::constant(st.trace_term - cy * st.eig_shift - 1.0))
            .add_term(xv, -cx)
            .add_term(av, -1.0);
        if kk > 1 {
            lin = lin.add_term(tv, -1.0);
            let v = probe_vector(nv, &ev, |x| {
                let t = fm.adjoint() * (h + g.adjoint() * read(x));
                DVector::from_iterator(2 * t.len(), t.iter().flat_map(|z| [2.0 * z.re, 2.0 * z.im]))
            });
            let mut u = v;
            u.push(LinearExpr::var(tv).plus(&LinearExpr::constant(-1.0)));
            prog.add_soc(SocBlock { t: LinearExpr::var(tv).plus(&LinearExpr::constant(1.0)), u });
        } else {
            prog.add_eq_zero(&LinearExpr::var(tv));
        }
        prog.add_ge_zero(&lin);
        if s > 0.0 {
            let mut u = vec![LinearExpr::constant(st.frob_term)];
            u.extend(probe_vector(nv, &ev, |x| {
                let v = soc_vector(&phi, &(h + g.adjoint() * read(x)), s);
                DVector::from_iterator(2 * v.len(), v.iter().flat_map(|z| [z.re, z.im]))
            }));
            prog.add_soc(SocBlock { t: LinearExpr::var(xv), u });
        } else {
            prog.add_ge_zero(&LinearExpr::var(xv));
        }
        prog.add_ge_zero(&LinearExpr::var(av));
    }
    let p = CcpProblem { program: prog, e_base: 0, m, alpha: alphas, alpha_unit: crate::ccp::signal_sensitivity(prob, f, e, true) };
    penalty_ccp(&p, e, params, rng, tol)
}

struct SdrStep {
    step: PrecoderStep,
    rank_ratio: f64,
}

fn precoder_step(scn: Scenario, prob: &ScaledProblem, e: &CVec, tol: f64) -> Result<SdrStep, DesignError> {
    let sdr = solve_precoder_outage(scn, prob, e, tol);
    if !sdr.status.accepted() {
        let st = PrecoderStep { f: CMat::zeros(prob.n, prob.k), beta: vec![0.0; prob.k], power: f64::NAN, status: sdr.status };
        return Ok(SdrStep { step: st, rank_ratio: f64::NAN });
    }
    let heff: Vec<CVec> = (0..prob.k).map(|k| prob.h_eff(k, e)).collect();
    let r1 = rank_one_extract(&sdr.gamma, &heff)?;
    let rank_ratio = sdr.rank_ratios().into_iter().fold(0.0, f64::max);
    let step = PrecoderStep { power: prob.power(&r1.f), f: r1.f, beta: vec![0.0; prob.k], status: sdr.status };
    Ok(SdrStep { step, rank_ratio })
}

/// Alternating optimization for the statistical error model.
pub fn ao_outage(
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
        let s = precoder_step(scn, &prob, &e0, opts.solver_tol)?;
        if s.step.status.accepted() {
            trace.start_restarts = attempt;
            start = Some((s, e0));
            break;
        }
        // Without an IRS every draw gives the same problem.
        if prob.m == 0 {
            break;
        }
    }
    let Some((s0, mut e)) = start else {
        return Err(DesignError::Infeasible);
    };
    let mut cur = s0.step;
    trace.power.push(cur.power);
    trace.f_status.push(cur.status);
    trace.rank_ratio.push(s0.rank_ratio);
    trace.iter_ms.push(clock.elapsed().as_secs_f64() * 1e3);

    let mut status = AoStatus::IterationLimit;
    if prob.m == 0 {
        status = AoStatus::Converged;
    }
    while status == AoStatus::IterationLimit && trace.power.len() < opts.max_iter {
        let t0 = Instant::now();
        let out = solve_reflect_outage(scn, &prob, &cur.f, &e, &opts.ccp, &mut rng, opts.solver_tol);
        trace.e_status.push(out.status);
        trace.ccp_iterations.push(out.iterations);
        let e_next = if out.status.accepted() { out.e } else { e.clone() };
        let s = precoder_step(scn, &prob, &e_next, opts.solver_tol)?;
        trace.f_status.push(s.step.status);
        if !s.step.status.accepted() {
            status = AoStatus::Stalled;
            break;
        }
        let prev = cur.power;
        cur = s.step;
        e = e_next;
        trace.power.push(cur.power);
        trace.rank_ratio.push(s.rank_ratio);
        trace.iter_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        if (prev - cur.power).abs() < opts.tol * prev.abs() {
            status = AoStatus::Converged;
        }
    }
    Ok(crate::worst_case::finish(&prob, cur, e, trace, status, qos))
}

/// Benchmark without an IRS: the partial-uncertainty outage design with the
/// cascaded channels removed, i.e. a single relaxed precoder solve.
pub fn no_irs_baseline(
    est: &EstimatedChannels,
    model: &ErrorModel,
    qos: &QosSpec,
    opts: &AoOptions,
) -> Result<AoOutcome, DesignError> {
    ao_outage(Scenario::Pcu, &est.without_irs(), model, qos, 0, opts)
}
