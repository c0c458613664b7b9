//! Conditional (post-selection) inference.
//!
//! Selective likelihoods `f(y; θ) p(y) / φ(θ)` for data that were only
//! analysed because they passed a selection step, with:
//!
//! * [`distributions`]: stable normal tails and truncated Gaussians;
//! * [`selective_model`]: generic selective densities, MLEs and CIs;
//! * [`winners`]: inference on the largest of several Gaussian means;
//! * [`polyhedral`]: linear targets after polyhedral selection events;
//! * [`two_stage`]: file-drawer and random-sample-size designs;
//! * [`location_model`]: conditional inference given the configuration;
//! * [`ancillarity`]: finite-model checks that ancillarity survives selection.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ancillarity;
pub mod distributions;
pub mod error;
pub mod inference;
pub mod location_model;
pub mod numerics;
pub mod polyhedral;
pub mod rng;
pub mod selective_model;
pub mod stats;
pub mod two_stage;
pub mod winners;

pub use error::{Error, Result};
pub use inference::{Alternative, Diagnostics, InferenceResult, Interval};
