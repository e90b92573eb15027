//! Numerical laboratory for stochastic heat and wave equations driven by
//! space-time white noise with measure-valued initial data: existence gates
//! built on the frequency-side resolvent integral, grid solvers for the mild
//! formulation, and Monte Carlo verification of the weighted-norm estimates
//! the well-posedness theory rests on.

pub mod conv;
pub mod dalang;
pub mod error;
pub mod exec;
pub mod grid;
pub mod levy;
pub mod measure;
pub mod noise;
pub mod norms;
pub mod picard;
pub mod quad;
pub mod wave;

pub use error::{Result, SpdeError};
