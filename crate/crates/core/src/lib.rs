//! Multistage physics-informed neural networks with spectral priors.
//!
//! The crate trains a sequence of small dense networks on a PDE: a plain
//! PINN first, then correction stages whose first layer is seeded from the
//! spectrum of the current equation residual. The final solution is the
//! sum `u_s(x) = Σ ε_j u_j(x)` of the stages, each scaled by the RMS of the
//! residual it was trained to remove.

pub mod autodiff;
pub mod error;
pub mod io;
pub mod multistage;
pub mod network;
pub mod optim;
pub mod problems;
pub mod specfun;
pub mod spectral;

pub use error::{Error, Result};
