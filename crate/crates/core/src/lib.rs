//! Parameter tracking through a coherent amplify-and-forward sensor network.
//!
//! Sensors observe a complex Gauss-Markov parameter in noise, scale their
//! observation by a complex gain and transmit over a coherent multiple-access
//! channel to a fusion center running a scalar Kalman filter. The crate
//! computes the MSE-optimal gain vectors under a sum power budget (closed
//! form) and under per-sensor budgets (semidefinite relaxation with exact
//! rank-one recovery), and evaluates the MSE outage probability of
//! equal-power transmission.
//!
//! Module map:
//! - [`model`]: process, channel and observation models.
//! - [`kalman`]: fusion-center filter recursions.
//! - [`sumpower`]: closed-form optimum under a sum power budget.
//! - [`sdp`]: dense primal-dual interior-point solver for the lifted SDP.
//! - [`indivpower`]: lifting, SDP solve and rank-one recovery under per-sensor budgets.
//! - [`outage`]: equal-power gain, outage matrix and closed-form outage probability.
//! - [`harness`]: seeded Monte Carlo experiment drivers, config and CSV output.

pub mod error;
pub mod harness;
pub mod indivpower;
pub mod kalman;
pub mod linalg;
pub mod model;
pub mod outage;
pub mod sdp;
pub mod sumpower;

pub use error::{Error, Result};
pub use num_complex::Complex64;
