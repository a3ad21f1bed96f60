//! Wandering domains for diffeomorphisms of the plane near a homoclinic tangency:
//! symbolic dynamics, hyperbolic transformations, the affine Cantor model,
//! tangency computation, word selection, renormalization and empirical statistics.

pub mod error;
pub mod hyperbolic;
pub mod model;
pub mod numeric;
pub mod renorm;
pub mod selection;
pub mod stats;
pub mod symbolic;
pub mod tangency;

pub use error::{Error, Result};
