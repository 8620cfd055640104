//! Sequential membership-inference tests for mechanisms that release a
//! sequence of outputs (running means, SGD iterates), their closed-form
//! error rates, a Monte-Carlo game harness, and a DKW-based lower bound on
//! the differential-privacy parameter ε.

pub mod attacks;
pub mod audit;
pub mod error;
pub mod error_theory;
pub mod game;
pub mod io;
pub mod mean_mechanism;
pub mod sgd;
pub mod stats;

pub use error::{Error, Result};
