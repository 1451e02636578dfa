//! Transmit covariance design for a multi-antenna access point that senses a
//! target, serves an information decoder and charges an energy harvester at
//! the same time.
//!
//! The crate evaluates the three performance measures of a covariance
//! (angle or response CRB, achievable rate, harvested RF power), solves the
//! two threshold-constrained rate maximization problems, maps the Pareto
//! boundary of the resulting region and evaluates reference schemes.

pub mod benchmarks;
pub mod channel;
pub mod convex;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod p1;
pub mod p2;
pub mod region;
pub mod scenario;

pub use error::{Error, Result};
