//! Correlation-matrix dynamics of quadratic open quantum systems through
//! continuous-time Lyapunov equations.

pub mod error;
pub mod linalg;
pub mod lyapunov;
pub mod model;
pub mod nonhermitian;
pub mod observables;
pub mod oracle;
pub mod perturbative;
pub mod quadrature;
pub mod regression;
pub mod spectral;

pub use error::{Error, Result};
