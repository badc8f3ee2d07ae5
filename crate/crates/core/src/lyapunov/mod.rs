//! Lyapunov-style norms for weighted max-min networks: the smoothing kernel,
//! kernel-smoothed service laws, the normalizer Γ, the growth function θ, the
//! state norms and the ledger of derived constants.

mod constants;
mod convolve;
mod kernel;
mod norms;
mod params;

use thiserror::Error;

pub use constants::{
    derive_constants, fit_tail_constant, gamma_checks, gamma_report, interarrival_tail_expectation, Admissibility,
    ConstantsLedger, GammaReport, RouteConstants,
};
pub use convolve::{convolve_service, grid_step, smoothed_density, smoothed_tail, ConvolvedService, QUADRATURE_TOLERANCE};
pub use kernel::{kernel_checks, kernel_checks_for, phi, phi_ccdf, phi_cdf, Kernel, KernelReport, KERNEL_TOLERANCE};
pub use norms::{c2_lower_bound, NormBreakdown, NormContext, SUP_REFINE_TOLERANCE};
pub use params::{auto_epsilon7, AutoTag, LyapunovConfig, LyapunovParams, Setting, Theta};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LyapunovError {
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("network is not subcritical (per-link slack {0:?})")]
    Supercritical(Vec<f64>),
    #[error("service on route {route} lacks a finite moment of order {order}")]
    MomentCondition { route: usize, order: f64 },
    #[error("interarrival on route {route} lacks a finite moment of order {order}")]
    MomentViolation { route: usize, order: f64 },
    #[error("check `{check}` failed at {location}")]
    CheckFailed { check: &'static str, location: f64 },
    #[error("constant {name} cannot be derived: {reason}")]
    InfeasibleConstant { name: &'static str, reason: String },
    #[error("quadrature did not reach tolerance at s = {s} (error estimate {error:e})")]
    QuadratureFailure { s: f64, error: f64 },
    #[error("no tabulation for route {0}")]
    UncoveredRoute(usize),
}
