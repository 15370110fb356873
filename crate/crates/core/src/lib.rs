//! Exploration-free budget allocation for multi-group mean estimation.
//!
//! A decision maker has `T` sampling rounds to spend across `K` groups
//! (arms) and wants every group mean estimated well, measured by the
//! `p`-norm of the per-group mean-squared errors `sigma_k^2 / n_k`. The
//! optimal split is closed form once the variances are known, so the
//! policies here only need to estimate variances well enough to avoid
//! over-sampling any group:
//!
//! - [`policies::run_nonadaptive`] uses a known variance lower bound to size
//!   a uniform first phase, then commits to plug-in shares.
//! - [`policies::run_adaptive`] replaces the lower bound with variance
//!   confidence intervals and an elimination loop.
//! - [`policies::run_contextual`] does the same for per-arm linear models,
//!   estimating the noise variance from ridge residuals.
//!
//! The supporting modules hold the reward models ([`arms`]), streaming
//! estimators ([`estimation`]), variance confidence radii
//! ([`concentration`]) and the closed-form allocation maths
//! ([`allocation`]).

pub mod allocation;
pub mod arms;
pub mod concentration;
pub mod error;
pub mod estimation;
pub mod policies;

pub use error::{Error, Result};
