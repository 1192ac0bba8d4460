//! Real conic programs (linear, second-order cone and semidefinite blocks),
//! the complex Hermitian to real symmetric embedding, and a dense
//! interior-point solver behind a small backend interface.

mod ipm;
pub mod program;

pub use ipm::{solve_ipm, IpmOptions};
pub use program::{
    affine_defect, embed_hermitian_lmi, embed_matrix, probe_complex_vector, probe_hermitian, probe_scalar,
    probe_vector, schur_norm_lmi, ComplexExpr, ConicProgram, HermAffine, LinearExpr, LinearRow, Sense, SocBlock,
    SymAffine, Violation,
};

/// Default solver tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum ConicError {
    #[error("matrix is not Hermitian: {0}")]
    NotHermitian(String),
    #[error("inconsistent program: {0}")]
    Shape(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Dual infeasible: the objective is unbounded below.
    Unbounded,
    NumericalFailure,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub dual_objective: f64,
    /// Largest scaled constraint violation of `x`, re-checked on the program.
    pub primal_residual: f64,
    pub gap: f64,
    pub iterations: usize,
}

impl ConicSolution {
    /// Optimal, or a stalled solve whose point is feasible within `accept`
    /// and whose relative duality gap is below `sqrt(accept)`.
    pub fn is_usable(&self, accept: f64) -> bool {
        match self.status {
            SolveStatus::Optimal => true,
            SolveStatus::NumericalFailure | SolveStatus::IterationLimit => {
                let rel = (self.objective_value - self.dual_objective).abs()
                    / self.objective_value.abs().max(1.0);
                self.primal_residual <= accept && rel.is_finite() && rel <= accept.sqrt()
            }
            _ => false,
        }
    }
}

/// A conic solver backend.
pub trait ConicBackend {
    fn solve(&self, prog: &ConicProgram, tol: f64) -> ConicSolution;
}

/// The embedded interior-point method.
#[derive(Clone, Debug, Default)]
pub struct InteriorPoint {
    pub options: IpmOptions,
}

impl ConicBackend for InteriorPoint {
    fn solve(&self, prog: &ConicProgram, tol: f64) -> ConicSolution {
        solve_ipm(prog, tol, &self.options)
    }
}

/// Solve with the default backend.
pub fn solve(prog: &ConicProgram, tol: f64) -> ConicSolution {
    InteriorPoint::default().solve(prog, tol)
}
