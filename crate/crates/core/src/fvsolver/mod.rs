//! Cell-centered finite-volume integrator for the mixed `(φ, ψ)` system
//!
//! ```text
//! ∂t Q(φ) = ∇·(M(φ) ∇ψ),     Q'(φ) ψ = W'(φ)/ε - ε Δφ
//! ```
//!
//! with the exact increment `Q(φⁿ⁺¹) - Q(φⁿ)` in time, a stabilized
//! nonlinear iteration, and a block-coupled linear solve per iterate.
//!
//! Two nonlinear schemes share the block structure (see [`Scheme`]).

mod assembly;
pub mod gmres;
mod mesh;
pub mod sparse;
mod stepper;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{KernelError, KernelSpec};

pub use assembly::{assemble_block, discrete_chain_quotient, initial_psi, solve_block, BlockSystem};
pub use mesh::Mesh2D;
pub use sparse::Ilu;
pub use stepper::{adapt_dt, reject_dt, RunStats, StepReport, Stepper};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite {what} coefficient in cell {cell}")]
    NonFiniteCoefficient { cell: usize, what: &'static str },
    #[error("zero or non-finite pivot in incomplete factorization at row {row}")]
    SingularPreconditioner { row: usize },
    #[error("GMRES stagnated after {iterations} iterations (last residual {:e})", residual_history.last().copied().unwrap_or(f64::NAN))]
    GmresStagnation {
        iterations: usize,
        residual_history: Vec<f64>,
    },
    #[error("Picard iteration did not converge in {iterations} iterations (residual {residual:e})")]
    PicardNotConverged { iterations: usize, residual: f64 },
    #[error("time step underflow at t = {t} (dt = {dt:e})")]
    TimeStepUnderflow { t: f64, dt: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

impl SolverError {
    /// Errors after which the step may be retried with a smaller `dt`.
    pub fn is_recoverable(&self) -> bool {
        matches!(
            self,
            Self::PicardNotConverged { .. }
                | Self::GmresStagnation { .. }
                | Self::SingularPreconditioner { .. }
                | Self::NonFiniteCoefficient { .. }
        )
    }
}

fn default_beta() -> f64 {
    1.02
}
fn default_picard_tol() -> f64 {
    1e-9
}
fn default_picard_max() -> usize {
    60
}
fn default_target_picard() -> usize {
    20
}
fn default_dt_min() -> f64 {
    1e-10
}
fn default_dt_max() -> f64 {
    5e-3
}
fn default_gmres_restart() -> usize {
    30
}
fn default_gmres_rel_tol() -> f64 {
    1e-8
}
fn default_gmres_max_iters() -> usize {
    300
}
fn default_alpha() -> f64 {
    1e-6
}
fn default_true() -> bool {
    true
}
fn default_ilu_fill() -> u32 {
    3
}

/// Time-discrete scheme and its linearization inside the iteration loop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Converges to the convex-split scheme
    /// `Q̂'(φⁿ⁺¹, φⁿ) ψ = (W'(φⁿ⁺¹) + β(φⁿ⁺¹ - φⁿ))/ε - εΔφⁿ⁺¹`, which
    /// dissipates the discrete energy for every `δt`. Coefficients are
    /// linearized Newton-style: `Q'(φᵏ)` in the φ-row and the derivative of
    /// `Q̂'` times `ψᵏ` in the ψ-row.
    #[default]
    ConvexSplit,
    /// Frozen coefficients `Q̄(φᵏ)`, `Q'_α(φᵏ)` and the fully implicit `W'`.
    Picard,
}

/// Numerical parameters of the integrator. `epsilon` is resolved by the
/// caller from the run configuration and is not part of the serialized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(skip)]
    pub epsilon: f64,
    /// Mobility `(1-φ²)^ℓ`; when absent, chosen from the kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mobility_exponent: Option<u32>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_max")]
    pub picard_max: usize,
    #[serde(default = "default_target_picard")]
    pub target_picard: usize,
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    /// First trial step; `dt_min * 1e3` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_initial: Option<f64>,
    #[serde(default = "default_gmres_restart")]
    pub gmres_restart: usize,
    #[serde(default = "default_gmres_rel_tol")]
    pub gmres_rel_tol: f64,
    #[serde(default = "default_gmres_max_iters")]
    pub gmres_max_iters: usize,
    #[serde(default = "default_alpha")]
    pub alpha_qprime: f64,
    #[serde(default = "default_true")]
    pub enforce_bounds: bool,
    #[serde(default)]
    pub scheme: Scheme,
    /// Fill level `k` of the `ILU(k)` preconditioner.
    #[serde(default = "default_ilu_fill")]
    pub ilu_fill: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            mobility_exponent: None,
            beta: default_beta(),
            picard_tol: default_picard_tol(),
            picard_max: default_picard_max(),
            target_picard: default_target_picard(),
            dt_min: default_dt_min(),
            dt_max: default_dt_max(),
            dt_initial: None,
            gmres_restart: default_gmres_restart(),
            gmres_rel_tol: default_gmres_rel_tol(),
            gmres_max_iters: default_gmres_max_iters(),
            alpha_qprime: default_alpha(),
            enforce_bounds: true,
            scheme: Scheme::default(),
            ilu_fill: default_ilu_fill(),
        }
    }
}

impl SolverConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidConfig(m));
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.beta >= 1.0) {
            return bad(format!("beta must be at least 1, got {}", self.beta));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max) {
            return bad(format!("need 0 < dt_min <= dt_max, got {} and {}", self.dt_min, self.dt_max));
        }
        if !(self.picard_tol > 0.0 && self.gmres_rel_tol > 0.0 && self.alpha_qprime > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.picard_max == 0 || self.target_picard == 0 || self.gmres_restart == 0 || self.gmres_max_iters == 0 {
            return bad("iteration limits must be positive".into());
        }
        if let Some(dt) = self.dt_initial {
            if !(dt > 0.0) {
                return bad(format!("dt_initial must be positive, got {dt}"));
            }
        }
        if self.mobility_exponent == Some(0) {
            return bad("mobility exponent must be at least 1".into());
        }
        Ok(())
    }

    /// The mobility exponent in effect for `kernel`: the configured value, or
    /// 3 for unshaped kernels of degree 2 and above and 2 otherwise.
    pub fn mobility_for(&self, kernel: &KernelSpec) -> u32 {
        self.mobility_exponent.unwrap_or(match kernel.family {
            crate::kernel::KernelFamily::Polynomial { k } if k >= 2 => 3,
            _ => 2,
        })
    }

    pub fn initial_dt(&self) -> f64 {
        self.dt_initial.unwrap_or(self.dt_min * 1e3).clamp(self.dt_min, self.dt_max)
    }
}

/// Cell fields and time bookkeeping of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub t: f64,
    /// Step size proposed for the next step.
    pub dt: f64,
    pub step_index: usize,
}

impl SimState {
    pub fn new(phi: Vec<f64>, psi: Vec<f64>, dt: f64) -> Self {
        Self {
            phi,
            psi,
            t: 0.0,
            dt,
            step_index: 0,
        }
    }
}
