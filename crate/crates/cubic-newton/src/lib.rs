//! Cubically regularized Newton methods driven by helper-function estimates.

pub mod baselines;
pub mod costmodel;
pub mod cubic;
pub mod estimators;
pub mod numdiff;
pub mod optimizer;
pub mod problems;
pub mod verify;
