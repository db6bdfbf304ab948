//! Mean-CVaR dynamic allocation with learned Gaussian-mixture transition
//! kernels and a monotone FFT integration scheme.

pub mod bellman;
pub mod charfn;
pub mod error;
pub mod kernelfit;
pub mod lattice;
pub mod mcvalidate;

pub use error::{Error, Result};
