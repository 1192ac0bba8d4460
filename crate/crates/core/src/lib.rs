//! Robust transmit-power minimization for IRS-aided multi-user MISO
//! downlinks with imperfect cascaded channel knowledge.
//!
//! - [`channel_model`]: geometry, Rayleigh channels, error models, rates.
//! - [`worst_case`]: bounded-error designs (S-procedure LMIs, penalty CCP).
//! - [`outage`]: Gaussian-error designs (Bernstein-type conditions, SDR).
//! - [`validation`]: Monte-Carlo outage, adversarial rate search, feasibility.

pub mod ccp;
pub mod channel_model;
pub mod design;
pub mod linalg;
pub mod outage;
pub mod validation;
pub mod worst_case;

pub mod normalize;

pub use normalize::ScaledProblem;
pub use design::{
    AoOptions, AoOutcome, AoStatus, AoTrace, BeamformingSolution, DesignError, Method, PrecoderStep, Scenario, StepStatus,
};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
