//! Numerical laboratory for limit laws of non-stationary and random
//! intermittent dynamics.
//!
//! The crate simulates Pomeau–Manneville maps under arbitrary parameter
//! schedules, discretizes their transfer operators (Ulam's method), and
//! checks decay, cone, covariance-growth and Gaussian-approximation
//! properties empirically. Closed-form parameter calculators for the block
//! construction live in [`params`].

pub mod error;
pub mod conditional;
pub mod cone;
pub mod decay;
pub mod fit;
pub mod gauss;
pub mod linalg;
pub mod maps;
pub mod observable;
pub mod params;
pub mod orbit;
pub mod quenched;
pub mod rng;
pub mod stats;
pub mod ulam;

pub use error::{Error, Result};
