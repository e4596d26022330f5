//! Restricted-covariance multivariate GARCH (RMG).
//!
//! The conditional covariance of `N` asset returns is restricted to one market
//! eigen-component plus a degenerate bulk,
//!
//! ```text
//! H(t) = N v0(t) P0(t) + v1(t) (I - P0(t)),    P0(t) = beta(t) beta(t)' / N,
//! ```
//!
//! so every quantity the model needs (the recursion for `v0`, `v1` and the
//! dynamic betas, `H^{-1/2}`, `det H`) costs `O(N)` per day. The dense `N x N`
//! matrix is never formed.
//!
//! Modules follow the pipeline: [`panel`] loads and normalizes returns,
//! [`targeting`] estimates the unconditional covariance by its leading
//! eigenpair, [`recursion`] advances the state, [`likelihood`] evaluates the
//! analytic likelihood, [`estimation`] fits parameters, [`simulation`]
//! generates Monte Carlo panels, [`baselines`] holds the univariate GARCH(1,1)
//! comparison model and [`analytics`] the post-fit statistics.

pub mod analytics;
pub mod baselines;
pub mod error;
pub mod estimation;
pub mod likelihood;
pub mod noise;
pub mod optimize;
pub mod panel;
pub mod recursion;
pub mod simulation;
pub mod targeting;
mod vecops;

pub use error::{Result, RmgError};
pub use estimation::{fit, FitOptions, FitReport};
pub use likelihood::{loglik_path, LikelihoodPath};
pub use noise::NoiseModel;
pub use panel::ReturnsPanel;
pub use recursion::{CovState, ModelParams, StepMode, Sym2, Tier};
pub use targeting::TargetSpec;
