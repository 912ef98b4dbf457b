//! Binary restricted Boltzmann machines and four ways to measure their average
//! test log-likelihood: exact enumeration, annealed importance sampling (AIS)
//! of the partition function, the conservative sampling-based likelihood (CSL)
//! estimator and reverse AIS (RAISE).

pub mod ais;
pub mod csl;
pub mod data;
pub mod error;
pub mod harness;
pub mod math;
pub mod oracle;
pub mod raise;
pub mod rbm;
pub mod rng;
pub mod train;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use rbm::{GibbsChain, JointState, RbmParams};
pub use rng::SeededRng;
