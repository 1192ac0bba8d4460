//! Types shared by the worst-case and outage designs.

use serde::{Deserialize, Serialize};

use crate::channel_model::{ErrorKind, ErrorModel, EstimatedChannels, QosSpec};
use crate::{CMat, CVec};

/// Which channels are uncertain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Only the cascaded channels carry errors.
    Pcu,
    /// Direct and cascaded channels carry errors.
    Fcu,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamformingSolution {
    /// Precoder, N x K, in sqrt(mW).
    pub f: CMat,
    /// Reflection vector, unit modulus.
    pub e: CVec,
    /// `||F||_F^2` in mW.
    pub power: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepStatus {
    Solved,
    /// Accepted although the solver stopped early; the point passed the
    /// feasibility re-check.
    Inaccurate,
    Infeasible,
    Failed,
    /// Penalty CCP ran out of restarts; the previous reflection vector is kept.
    NonConvergent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AoStatus {
    Converged,
    IterationLimit,
    Infeasible,
    /// A later subproblem failed; the last accepted design is returned.
    Stalled,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AoTrace {
    /// Power after every precoder step (mW).
    pub power: Vec<f64>,
    pub f_status: Vec<StepStatus>,
    pub e_status: Vec<StepStatus>,
    /// Inner penalty-CCP iterations per reflection step.
    pub ccp_iterations: Vec<usize>,
    /// Wall time of each outer iteration in milliseconds.
    pub iter_ms: Vec<f64>,
    /// Largest lambda_2/lambda_1 over users per SDR step (outage designs).
    pub rank_ratio: Vec<f64>,
    /// Number of random restarts of e(0) before a feasible start was found.
    pub start_restarts: usize,
}

impl AoTrace {
    /// Outer iterations performed (precoder steps).
    pub fn iterations(&self) -> usize {
        self.power.len()
    }

    /// First 1-based iteration whose relative change from its predecessor is
    /// below `tol`.
    pub fn converged_at(&self, tol: f64) -> Option<usize> {
        self.power.windows(2).position(|w| (w[1] - w[0]).abs() <= tol * w[0].abs()).map(|i| i + 2)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DesignError {
    #[error(transparent)]
    Model(#[from] crate::channel_model::ModelError),
    #[error("degenerate channel for user {0}: ||Gamma^(1/2) h|| below 1e-12")]
    DegenerateChannel(usize),
    #[error("subproblem infeasible")]
    Infeasible,
    #[error("solver failed: {0}")]
    Solver(String),
}

/// Result of one precoder subproblem, in scaled units (see [`crate::ScaledProblem`]).
#[derive(Clone, Debug)]
pub struct PrecoderStep {
    pub f: CMat,
    /// Interference-plus-noise slacks (noise normalized to 1).
    pub beta: Vec<f64>,
    /// Physical power of `f` (mW).
    pub power: f64,
    pub status: StepStatus,
}

#[derive(Clone, Debug)]
pub struct AoOptions {
    pub max_iter: usize,
    /// Relative power change that ends the alternation.
    pub tol: f64,
    /// Extra random draws of e(0) when the first precoder step is infeasible.
    pub start_restarts: usize,
    pub ccp: crate::ccp::PenaltyCcpParams,
    pub solver_tol: f64,
}

impl Default for AoOptions {
    fn default() -> Self {
        Self {
            max_iter: 30,
            tol: 1e-4,
            start_restarts: 3,
            ccp: crate::ccp::PenaltyCcpParams::default(),
            solver_tol: irsrob_conic::DEFAULT_TOL,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AoOutcome {
    pub solution: BeamformingSolution,
    pub trace: AoTrace,
    pub status: AoStatus,
    /// Interference-plus-noise slacks of the final precoder step (mW).
    pub beta: Vec<f64>,
}

pub(crate) fn step_status(sol: &irsrob_conic::ConicSolution) -> StepStatus {
    use irsrob_conic::SolveStatus;
    match sol.status {
        SolveStatus::Optimal => StepStatus::Solved,
        SolveStatus::Infeasible => StepStatus::Infeasible,
        _ if sol.is_usable(ACCEPT_RESIDUAL) => StepStatus::Inaccurate,
        _ => StepStatus::Failed,
    }
}

pub(crate) const ACCEPT_RESIDUAL: f64 = 1e-6;

impl StepStatus {
    pub fn accepted(self) -> bool {
        matches!(self, StepStatus::Solved | StepStatus::Inaccurate)
    }
}

/// The five designs compared in the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PcuBounded,
    FcuBounded,
    PcuStat,
    FcuStat,
    NoIrsBaseline,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::PcuBounded, Method::FcuBounded, Method::PcuStat, Method::FcuStat, Method::NoIrsBaseline];

    pub fn name(self) -> &'static str {
        match self {
            Method::PcuBounded => "pcu-bounded",
            Method::FcuBounded => "fcu-bounded",
            Method::PcuStat => "pcu-stat",
            Method::FcuStat => "fcu-stat",
            Method::NoIrsBaseline => "no-irs-baseline",
        }
    }

    pub fn scenario(self) -> Scenario {
        match self {
            Method::FcuBounded | Method::FcuStat => Scenario::Fcu,
            _ => Scenario::Pcu,
        }
    }

    pub fn error_kind(self) -> ErrorKind {
        match self {
            Method::PcuBounded | Method::FcuBounded => ErrorKind::Bounded,
            _ => ErrorKind::Statistical,
        }
    }

    /// Error model for this method; PCU methods drop the direct-channel error.
    pub fn error_model(
        self,
        est: &EstimatedChannels,
        delta_g: f64,
        delta_h: f64,
        rho: f64,
    ) -> Result<ErrorModel, crate::channel_model::ModelError> {
        let m = ErrorModel::from_estimates(self.error_kind(), est, delta_g, delta_h, rho)?;
        Ok(if self.scenario() == Scenario::Pcu { m.partial() } else { m })
    }

    pub fn solve(
        self,
        est: &EstimatedChannels,
        model: &ErrorModel,
        qos: &QosSpec,
        init_seed: u64,
        opts: &AoOptions,
    ) -> Result<AoOutcome, DesignError> {
        match self {
            Method::PcuBounded | Method::FcuBounded => {
                crate::worst_case::ao_bounded(self.scenario(), est, model, qos, init_seed, opts)
            }
            Method::PcuStat | Method::FcuStat => {
                crate::outage::ao_outage(self.scenario(), est, model, qos, init_seed, opts)
            }
            Method::NoIrsBaseline => crate::outage::no_irs_baseline(est, model, qos, opts),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown method {s:?}"))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
