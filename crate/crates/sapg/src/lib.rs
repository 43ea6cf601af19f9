//! Stochastic approximation proximal gradient (SAPG) estimation of
//! regularisation parameters by maximum marginal likelihood, with the
//! gradient expectations supplied by inexact proximal Langevin samplers.
//!
//! The crate is organised around the pipeline that an experiment runs
//! through:
//!
//! - [`model`] — θ-indexed potential families `V_θ + U_θ` with their
//!   regularity metadata, parameter domains, gradient-estimator variants
//!   and a handful of built-in desk-scale problem instances.
//! - [`prox`] — proximal operators, Moreau–Yosida envelopes and the
//!   optimality-residual certificate used to vet prox implementations.
//! - [`samplers`] — one-step Markov kernels (ULA, MYULA, PULA) with exact
//!   deterministic-drift and second-moment accessors.
//! - [`driver`] — the projected stochastic approximation loop, power-law
//!   schedules, the averaged iterate and the schedule validator.
//! - [`oracle`] — independent ground truth for scalar instances:
//!   quadrature expectations, closed-form/bisected maximisers, the
//!   Gaussian KL divergence and exact drift-inequality sides.
//! - [`diagnostics`] — empirical checks of the convergence theory:
//!   synchronous-coupling contraction, stationary-bias sweeps,
//!   drift-certificate grids and constant-step plateau studies.
//! - [`config`] / [`cli`] — the flat experiment-config format and the
//!   subcommand entry points behind the `sapg` binary.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod driver;
mod error;
pub mod model;
pub mod oracle;
pub mod prox;
pub mod samplers;
pub(crate) mod util;

pub use error::{Error, Result};
