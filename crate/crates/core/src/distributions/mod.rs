//! Gaussian and truncated-Gaussian primitives.

pub mod normal;
pub mod truncated;

pub use truncated::{merge_intervals, TruncatedGaussian};
