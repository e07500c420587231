//! Numerical laboratory for nonlocal interaction energies on random point
//! clouds: discrete energies, optimal transport, continuum reference
//! functionals and the experiments that compare them.

pub mod continuum;
pub mod discrete_energy;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod numerics;
pub mod oracle;
pub mod transport;

pub use error::{Error, Result};
