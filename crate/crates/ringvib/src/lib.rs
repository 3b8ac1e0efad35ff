//! Isogeometric curved Euler-Bernoulli beams: spline spaces, ring and
//! cantilever assembly in five formulations, eigen-analysis against the
//! closed-form ring solution, and membrane-locking diagnostics.

pub mod analytical;
pub mod assembly;
pub mod cantilever;
pub mod checks;
pub mod eigen;
pub mod error;
pub mod locking_free;
pub mod quadrature;
pub mod ring;
pub mod spectral;
pub mod spline;

pub use error::{Error, Result};
