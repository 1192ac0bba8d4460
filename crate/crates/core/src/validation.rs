//! Empirical checks of finished designs: Monte-Carlo outage, an adversarial
//! search for the worst rate over the error ball, and feasibility statistics.
//!
//! Outage sampling can only refute statistical designs and the rate search
//! can only refute bounded ones; neither proves anything.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel_model::{
    achievable_rate, draw_error, generate_scenario, EstimatedChannels, ErrorKind, ErrorModel, Geometry, ModelError,
    QosSpec, SystemDims,
};
use crate::design::{AoOptions, DesignError, Method};
use crate::{BeamformingSolution, CMat, CVec};
use num_complex::Complex64;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

/// Wilson score interval for `hits` successes out of `n`.
pub fn wilson_interval(hits: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = z * z;
    let den = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / den;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / den;
    ((center - half).max(0.0), (center + half).min(1.0))
}

pub fn wilson_halfwidth(hits: usize, n: usize, z: f64) -> f64 {
    let (lo, hi) = wilson_interval(hits, n, z);
    0.5 * (hi - lo)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutageEstimate {
    pub outage: Vec<f64>,
    pub halfwidth: Vec<f64>,
    pub n_samples: usize,
}

fn rate_of(sol: &BeamformingSolution, h: &CVec, g: &CMat, sigma_sq: f64, k: usize) -> f64 {
    achievable_rate(&sol.f, &sol.e, h, g, sigma_sq, k).expect("dimensions checked by caller")
}

fn check_dims(sol: &BeamformingSolution, est: &EstimatedChannels) -> Result<(), ModelError> {
    let ok = sol.f.nrows() == est.n_bs() && sol.f.ncols() == est.n_users() && sol.e.len() == est.n_irs();
    if ok {
        Ok(())
    } else {
        Err(ModelError::Mismatch(format!(
            "design is {}x{} with {} elements, channels have N={}, K={}, M={}",
            sol.f.nrows(),
            sol.f.ncols(),
            sol.e.len(),
            est.n_bs(),
            est.n_users(),
            est.n_irs()
        )))
    }
}

/// Fraction of Gaussian error draws (true = estimate + error) whose rate is
/// below the target, per user, with Wilson 95% halfwidths.
pub fn mc_outage(
    sol: &BeamformingSolution,
    est: &EstimatedChannels,
    model: &ErrorModel,
    qos: &QosSpec,
    n_samples: usize,
    seed: u64,
) -> Result<OutageEstimate, ModelError> {
    if model.kind != ErrorKind::Statistical {
        return Err(ModelError::Mismatch("outage sampling needs the statistical error model".into()));
    }
    check_dims(sol, est)?;
    let (n, m, kk) = (est.n_bs(), est.n_irs(), est.n_users());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut misses = vec![0usize; kk];
    for _ in 0..n_samples {
        for k in 0..kk {
            let err = draw_error(&mut rng, model, k, n, m);
            let h = &est.direct_est[k] + &err.dh;
            let g = &est.cascaded_est[k] + &err.dg;
            if rate_of(sol, &h, &g, qos.noise_power[k], k) < qos.target_rate[k] {
                misses[k] += 1;
            }
        }
    }
    let nf = n_samples.max(1) as f64;
    Ok(OutageEstimate {
        outage: misses.iter().map(|&c| c as f64 / nf).collect(),
        halfwidth: misses.iter().map(|&c| wilson_halfwidth(c, n_samples, Z95)).collect(),
        n_samples,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub starts: usize,
    pub steps: usize,
    /// Step length as a fraction of the radius.
    pub step_frac: f64,
    /// Central-difference step relative to the radius.
    pub fd_rel: f64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { starts: 200, steps: 50, step_frac: 0.1, fd_rel: 1e-6 }
    }
}

struct Ball {
    offset: usize,
    len: usize,
    radius: f64,
}

fn project(x: &mut [f64], balls: &[Ball]) {
    for b in balls {
        let s = &mut x[b.offset..b.offset + b.len];
        let nrm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm > b.radius {
            s.iter_mut().for_each(|v| *v *= b.radius / nrm);
        }
    }
}

/// Smallest rate found per user by projected gradient descent over the
/// error balls (random boundary starts). An upper bound on the true minimum.
pub fn worst_case_rate(
    sol: &BeamformingSolution,
    est: &EstimatedChannels,
    model: &ErrorModel,
    qos: &QosSpec,
    budget: &SearchBudget,
    seed: u64,
) -> Result<Vec<f64>, ModelError> {
    if model.kind != ErrorKind::Bounded {
        return Err(ModelError::Mismatch("rate search needs the bounded error model".into()));
    }
    check_dims(sol, est)?;
    let (n, m, kk) = (est.n_bs(), est.n_irs(), est.n_users());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(kk);
    for k in 0..kk {
        let mut balls = Vec::new();
        let mut dim = 0;
        if model.xi_h[k] > 0.0 {
            balls.push(Ball { offset: 0, len: 2 * n, radius: model.xi_h[k] });
            dim += 2 * n;
        }
        let g_off = dim;
        let with_g = model.xi_g[k] > 0.0 && m > 0;
        if with_g {
            balls.push(Ball { offset: dim, len: 2 * m * n, radius: model.xi_g[k] });
            dim += 2 * m * n;
        }
        let with_h = model.xi_h[k] > 0.0;
        let sigma = qos.noise_power[k];
        let rate = |x: &[f64]| {
            let mut h = est.direct_est[k].clone();
            if with_h {
                for i in 0..n {
                    h[i] += Complex64::new(x[2 * i], x[2 * i + 1]);
                }
            }
            let mut g = est.cascaded_est[k].clone();
            if with_g {
                for (i, z) in g.iter_mut().enumerate() {
                    *z += Complex64::new(x[g_off + 2 * i], x[g_off + 2 * i + 1]);
                }
            }
            rate_of(sol, &h, &g, sigma, k)
        };
        let mut best = rate(&vec![0.0; dim]);
        if dim == 0 {
            out.push(best);
            continue;
        }
        let mut grad = vec![0.0; dim];
        for _ in 0..budget.starts {
            let mut x: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            for b in &balls {
                let s = &mut x[b.offset..b.offset + b.len];
                let nrm = s.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                s.iter_mut().for_each(|v| *v *= b.radius / nrm);
            }
            best = best.min(rate(&x));
            for _ in 0..budget.steps {
                for b in &balls {
                    let hstep = budget.fd_rel * b.radius;
                    for i in b.offset..b.offset + b.len {
                        let keep = x[i];
                        x[i] = keep + hstep;
                        let up = rate(&x);
                        x[i] = keep - hstep;
                        let down = rate(&x);
                        x[i] = keep;
                        grad[i] = (up - down) / (2.0 * hstep);
                    }
                }
                for b in &balls {
                    let g = &grad[b.offset..b.offset + b.len];
                    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if gn > 0.0 {
                        let step = budget.step_frac * b.radius / gn;
                        for i in b.offset..b.offset + b.len {
                            x[i] -= step * grad[i];
                        }
                    }
                }
                project(&mut x, &balls);
                best = best.min(rate(&x));
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// One grid point of a feasibility study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub dims: SystemDims,
    pub geometry: Geometry,
    pub delta_g: f64,
    pub delta_h: f64,
    pub rate: f64,
    pub noise_dbm: f64,
    pub rho: f64,
}

/// Whether `method` finds a design on instance `instance` of `point`.
pub fn instance_feasible(
    method: Method,
    point: &GridPoint,
    scenario_seed: u64,
    opts: &AoOptions,
) -> Result<bool, ModelError> {
    let truth = generate_scenario(point.dims, &point.geometry, scenario_seed)?;
    let est = EstimatedChannels::from(&truth);
    let model = method.error_model(&est, point.delta_g, point.delta_h, point.rho)?;
    let qos = QosSpec::uniform(point.dims.n_users, point.rate, point.noise_dbm, point.rho);
    match method.solve(&est, &model, &qos, scenario_seed, opts) {
        Ok(_) => Ok(true),
        Err(DesignError::Infeasible) => Ok(false),
        Err(DesignError::Model(e)) => Err(e),
        Err(e) => {
            log::warn!("{method} on seed {scenario_seed}: {e}; counted infeasible");
            Ok(false)
        }
    }
}

/// Feasible fraction of `n_instances` scenarios per grid point. Scenario
/// seeds are `seed + i`, shared across grid points.
pub fn feasibility_rate(
    method: Method,
    grid: &[GridPoint],
    n_instances: usize,
    seed: u64,
    opts: &AoOptions,
) -> Result<Vec<f64>, ModelError> {
    if n_instances == 0 {
        return Err(ModelError::Dims("n_instances must be at least 1".into()));
    }
    grid.iter()
        .map(|p| {
            let mut ok = 0;
            for i in 0..n_instances {
                if instance_feasible(method, p, seed.wrapping_add(i as u64), opts)? {
                    ok += 1;
                }
            }
            Ok(ok as f64 / n_instances as f64)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub per_user_empirical_outage: Vec<f64>,
    pub per_user_worst_rate: Vec<f64>,
    pub n_samples: usize,
    pub search_budget: usize,
    pub confidence_halfwidth: f64,
}

impl ValidationReport {
    pub fn from_parts(outage: Option<&OutageEstimate>, worst: Option<&[f64]>, budget: &SearchBudget) -> Self {
        Self {
            per_user_empirical_outage: outage.map(|o| o.outage.clone()).unwrap_or_default(),
            per_user_worst_rate: worst.map(|w| w.to_vec()).unwrap_or_default(),
            n_samples: outage.map_or(0, |o| o.n_samples),
            search_budget: if worst.is_some() { budget.starts * budget.steps } else { 0 },
            confidence_halfwidth: outage.map_or(0.0, |o| o.halfwidth.iter().copied().fold(0.0, f64::max)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    /// Rows `user,empirical_outage,worst_rate` with empty cells for missing values.
    pub fn to_csv(&self) -> String {
        let k = self.per_user_empirical_outage.len().max(self.per_user_worst_rate.len());
        let mut s = String::from("user,empirical_outage,worst_rate,n_samples,search_budget,confidence_halfwidth\n");
        let cell = |v: Option<&f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for u in 0..k {
            s += &format!(
                "{u},{},{},{},{},{}\n",
                cell(self.per_user_empirical_outage.get(u)),
                cell(self.per_user_worst_rate.get(u)),
                self.n_samples,
                self.search_budget,
                self.confidence_halfwidth
            );
        }
        s
    }
}
