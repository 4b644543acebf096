//! Integrated GMRF model for stress fields on grain-labeled tetrahedral
//! meshes: latent fields on grain-boundary surfaces and junction lines,
//! convolved into the grain interiors by exponential kernels, fitted by
//! Metropolis-within-Gibbs MCMC.

pub mod design;
pub mod diagnostics;
pub mod error;
pub mod gmrf;
pub mod mesh;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod synth;

pub use error::{Error, Result};
