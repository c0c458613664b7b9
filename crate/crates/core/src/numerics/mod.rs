//! Numerical building blocks: quadrature, root finding and maximization.

pub mod optimize;
pub mod quadrature;
pub mod roots;

pub use optimize::{brent_minimize, fd_gradient, maximize_bfgs, maximize_scalar};
pub use quadrature::{integrate, log_integrate, Integral, QuadOptions};
pub use roots::{brent, search_bracket, Bracket};
