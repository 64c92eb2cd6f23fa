//! Relativistic Cucker-Smale particles coupled to an incompressible
//! Navier-Stokes fluid on the periodic unit box.
//!
//! Particles carry positions on the torus and relativistic velocities `w`;
//! the fluid is a divergence-free spectral field. The two exchange momentum
//! through a drag force deposited and interpolated with matched
//! cloud-in-cell kernels.

pub mod config;
pub mod coupled;
pub mod coupling;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod fluid;
pub mod grid;
pub mod kernels;
pub mod picard;
pub mod relkin;

pub use error::{Error, Result};

/// Three-component vector used for positions and velocities in both two and
/// three dimensions; in two dimensions the last component is always zero.
pub type Vec3 = nalgebra::Vector3<f64>;
