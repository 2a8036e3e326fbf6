//! Particle MCMC for state-space models with conjugate parameter blocks
//! integrated out.

pub mod conjugacy;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod linalg;
pub mod models;
pub mod par;
pub mod rng;
pub mod samplers;
pub mod smc;

pub use error::{Error, Result};
pub use rng::RngStream;
