//! Penalty convex-concave procedure for the unit-modulus constraint.
//!
//! `|e_m| = 1` is split into `|e_m|^2 <= 1 + b_{M+m}` (convex) and
//! `|e_m|^2 >= 1 - b_m`, whose left side is replaced by its linearization at
//! the previous inner iterate. The slacks are penalized by `lambda ||b||_1`
//! with `lambda` growing geometrically.

use irsrob_conic::{solve, ConicProgram, LinearExpr, SocBlock};
use rand::Rng;

use crate::design::StepStatus;
use crate::linalg::{random_phases, unit_modulus};
use crate::CVec;

#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyCcpParams {
    pub lambda0: f64,
    pub gamma: f64,
    pub lambda_max: f64,
    pub chi: f64,
    pub nu: f64,
    pub t_max: usize,
    pub restart_budget: usize,
}

impl Default for PenaltyCcpParams {
    fn default() -> Self {
        Self { lambda0: 1.0, gamma: 3.0, lambda_max: 1e5, chi: 1e-5, nu: 1e-4, t_max: 30, restart_budget: 3 }
    }
}

impl PenaltyCcpParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 1.0) {
            return Err(format!("gamma must exceed 1, got {}", self.gamma));
        }
        if !(self.lambda0 > 0.0 && self.lambda_max > self.lambda0) {
            return Err(format!("need lambda_max > lambda0 > 0, got {} and {}", self.lambda_max, self.lambda0));
        }
        if !(self.chi > 0.0 && self.nu > 0.0) {
            return Err("chi and nu must be positive".into());
        }
        if self.t_max == 0 {
            return Err("t_max must be at least 1".into());
        }
        Ok(())
    }
}

/// A reflection subproblem ready for the penalty loop.
///
/// `program` holds every constraint except unit modulus; its objective is
/// replaced by `-sum(alpha)`. The reflection vector occupies `2m` variables
/// starting at `e_base`, interleaved (re, im). The slacks are measured in
/// units of `alpha_unit` so that the penalty schedule is dimensionless.
#[derive(Clone, Debug)]
pub struct CcpProblem {
    pub program: ConicProgram,
    pub e_base: usize,
    pub m: usize,
    pub alpha: Vec<usize>,
    pub alpha_unit: f64,
}

#[derive(Clone, Debug)]
pub struct CcpOutcome {
    /// Renormalized to exact unit modulus.
    pub e: CVec,
    /// Last inner solution before renormalization.
    pub raw_e: CVec,
    pub alphas: Vec<f64>,
    pub status: StepStatus,
    pub iterations: usize,
    pub restarts: usize,
    /// `max_m ||e_m| - 1|` of `raw_e`.
    pub modulus_defect: f64,
    /// `||b||_1` at the last inner iterate.
    pub penalty: f64,
}

fn read_e(x: &[f64], base: usize, m: usize) -> CVec {
    CVec::from_fn(m, |i, _| num_complex::Complex64::new(x[base + 2 * i], x[base + 2 * i + 1]))
}

fn with_unit_modulus(p: &CcpProblem, e_t: &CVec, lambda: f64) -> (ConicProgram, usize) {
    let m = p.m;
    let mut prog = p.program.clone();
    let b0 = prog.n_vars;
    prog.n_vars += 2 * m;
    prog.objective.iter_mut().for_each(|c| *c = 0.0);
    prog.objective.extend(std::iter::repeat_n(lambda, 2 * m));
    for &a in &p.alpha {
        prog.objective[a] = -1.0 / p.alpha_unit;
    }
    for i in 0..m {
        let (re, im) = (p.e_base + 2 * i, p.e_base + 2 * i + 1);
        let (b_lo, b_hi) = (b0 + i, b0 + m + i);
        let et = e_t[i];
        // b_m - 1 - |e_t|^2 + 2 Re(e^* e_t) >= 0
        prog.add_ge_zero(
            &LinearExpr::constant(-1.0 - et.norm_sqr())
                .add_term(b_lo, 1.0)
                .add_term(re, 2.0 * et.re)
                .add_term(im, 2.0 * et.im),
        );
        prog.add_soc(SocBlock {
            t: LinearExpr::var(b_hi).plus(&LinearExpr::constant(2.0)),
            u: vec![LinearExpr::scaled_var(re, 2.0), LinearExpr::scaled_var(im, 2.0), LinearExpr::var(b_hi)],
        });
        prog.add_ge_zero(&LinearExpr::var(b_lo));
        prog.add_ge_zero(&LinearExpr::var(b_hi));
    }
    (prog, b0)
}

/// Run the penalty loop from `e_start`, restarting from random phases when
/// `t_max` inner iterations pass without convergence.
pub fn penalty_ccp<R: Rng + ?Sized>(
    p: &CcpProblem,
    e_start: &CVec,
    params: &PenaltyCcpParams,
    rng: &mut R,
    tol: f64,
) -> CcpOutcome {
    let m = p.m;
    let mut total = 0;
    let mut last_e = e_start.clone();
    let mut last_alpha = vec![0.0; p.alpha.len()];
    let mut last_pen = f64::INFINITY;
    for attempt in 0..=params.restart_budget {
        let mut e_t = if attempt == 0 { e_start.clone() } else { random_phases(rng, m) };
        let mut lambda = params.lambda0;
        for _ in 0..params.t_max {
            let (prog, b0) = with_unit_modulus(p, &e_t, lambda);
            let sol = solve(&prog, tol);
            total += 1;
            let st = crate::design::step_status(&sol);
            if !st.accepted() {
                log::debug!("ccp inner solve {:?}, restarting", sol.status);
                break;
            }
            let e_new = read_e(&sol.x, p.e_base, m);
            let pen: f64 = sol.x[b0..b0 + 2 * m].iter().map(|b| b.abs()).sum();
            let step: f64 = (&e_new - &e_t).iter().map(|z| z.re.abs() + z.im.abs()).sum();
            e_t = e_new;
            last_e = e_t.clone();
            last_alpha = p.alpha.iter().map(|&a| sol.x[a]).collect();
            last_pen = pen;
            if pen <= params.chi && step <= params.nu {
                return finish(e_t, last_alpha, StepStatus::Solved, total, attempt, pen);
            }
            lambda = (lambda * params.gamma).min(params.lambda_max);
        }
    }
    finish(last_e, last_alpha, StepStatus::NonConvergent, total, params.restart_budget, last_pen)
}

/// Slack unit for the reflection subproblem: the largest per-element
/// sensitivity `2 |x_k| |(G_k f_k)_m|` of the useful-signal term at `(f, e)`,
/// divided by `2 pi`. With `lambda = 1` the first penalized step can then turn
/// the most sensitive element by up to half a turn. `per_target` divides by
/// `gamma_k` for constraints written in `|x_k|^2 / gamma_k`.
pub fn signal_sensitivity(prob: &crate::ScaledProblem, f: &crate::CMat, e: &CVec, per_target: bool) -> f64 {
    let mut w = 0.0f64;
    for k in 0..prob.k {
        let fk = f.column(k);
        let x = prob.h_eff(k, e).dotc(&fk);
        let gf = &prob.g[k] * fk;
        let peak = gf.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let scale = if per_target { prob.gamma[k] } else { 1.0 };
        w = w.max(2.0 * x.norm() * peak / scale);
    }
    if w > 0.0 && w.is_finite() {
        w / std::f64::consts::TAU
    } else {
        1.0
    }
}

fn finish(raw: CVec, alphas: Vec<f64>, status: StepStatus, iterations: usize, restarts: usize, penalty: f64) -> CcpOutcome {
    let modulus_defect = raw.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max);
    CcpOutcome { e: unit_modulus(&raw), raw_e: raw, alphas, status, iterations, restarts, modulus_defect, penalty }
}
