//! Tests for abrupt and gradual changes in the mean of functional time series.
//!
//! Curves are stored as values on a shared [`Grid`] whose quadrature weights
//! define the L² geometry. Three statistic families are provided for both
//! change shapes:
//!
//! - **PC**: CUSUM of principal component scores, weighted by inverse
//!   long-run eigenvalues (squared form, pivotal limit).
//! - **FF**: norm of the functional CUSUM process.
//! - **WF**: norm of the CUSUM process after applying `(C + λ₁ Id)^{-1/2}`,
//!   a ridge-regularized whitening that makes the statistic scale-invariant.
//!
//! Gradual versions replace the CUSUM indicator by a weight function `h`.
//! Null limits are simulated from Brownian bridges (see [`limits`]).

pub mod amoc;
pub mod covariance;
pub mod dgp;
mod error;
pub mod fseries;
pub mod gradual;
pub mod io;
pub mod json;
pub mod limits;
pub mod pipeline;
pub mod quad;
pub(crate) mod rng;
pub mod spectral;

pub use amoc::{cusum_process, t_ff, t_ff_spectral, t_pc, t_wf, t_wf_spectral, Method, TestReport};
pub use covariance::{default_bandwidth, lag_cov, lrcov, sample_cov, Bandwidth, KernelFn, LinOp};
pub use dgp::{ChangeFn, EigenDecay, NoiseKind, NoiseSpec};
pub use error::{Error, Result};
pub use fseries::{center, inner, mean_curve, norm, project_scores, Curve, FSeries, Grid, ScoreMatrix};
pub use gradual::{t_ff_grad, t_pc_grad, t_wf_grad, weighted_sum_process, WeightFn};
pub use limits::{crit_value, p_value, Family, LimitBank, LimitSamples};
pub use spectral::{eig, op_norm, ridge_inv_sqrt_apply, truncate, Spectrum, Truncation};

/// Library version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
