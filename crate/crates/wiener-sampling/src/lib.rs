//! Sampling policies for remote estimation of a Wiener process over a
//! channel with random transmission delay.
//!
//! A sensor observes a standard Wiener process and decides when to transmit
//! samples to a remote estimator. Each transmission occupies the channel for
//! a random delay, and at most one packet may be in flight. The estimator
//! holds the latest delivered sample value, and performance is the long-run
//! time-average of the squared estimation error, optionally subject to a
//! minimum mean sampling interval (a sampling-frequency budget).
//!
//! The crate provides:
//!
//! - exact frame kernels for simulating one sampling frame (delay phase plus
//!   an adaptive waiting phase that stops when the signal moves a threshold
//!   distance from the last sample) with Brownian-bridge exit correction
//!   ([`kernels`]);
//! - a family of delay distributions with closed-form or quadrature moments
//!   ([`delay`]);
//! - closed-form frame statistics and the scalar objective whose root
//!   characterizes the optimal threshold ([`analytic`]);
//! - offline solvers for the unconstrained and frequency-constrained optimal
//!   policies ([`solver`]);
//! - the online stochastic-approximation policy that learns the optimal
//!   threshold from causally observed increments, plus baseline policies
//!   ([`policy`]);
//! - a replicated trace simulator with per-frame error accounting, regret
//!   series, and deterministic CSV/JSON output ([`sim`], [`output`]);
//! - a self-check suite wiring the analytic layer against the simulator
//!   ([`validate`]).
//!
//! The `wsamp` binary exposes all of this on the command line.

pub mod analytic;
pub mod delay;
pub mod kernels;
pub mod output;
pub mod policy;
pub mod quad;
pub mod rng;
pub mod sim;
pub mod solver;
pub mod validate;

pub use analytic::AnalyticContext;
pub use delay::DelayModel;
pub use policy::{FrameRecord, PolicyKind, PolicySpec};
pub use rng::RngStream;
pub use sim::TraceSeries;
pub use solver::OptimalSolution;

/// Errors produced by the library.
///
/// The CLI maps these to process exit codes, so variants are grouped by
/// failure class rather than by module.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A textual spec (delay model, policy, config) could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    /// Root finding failed: bad bracket, no convergence, or a violated
    /// monotonicity assumption.
    #[error("solver failure: {0}")]
    Solver(String),
    /// Numerical integration failed an internal accuracy check.
    #[error("integration failure: {0}")]
    Integration(String),
    /// A simulated state became NaN or infinite.
    #[error("non-finite state: {0}")]
    NonFinite(String),
    /// Traces or solutions built against different delay models were mixed.
    #[error("mismatched models: {0}")]
    MismatchedModels(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let message = e.to_string();
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => Error::Parse(message),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
