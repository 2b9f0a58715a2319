//! Past null cones, injectivity radii and curvature fluxes for 3+1 metrics
//! given in transported coordinates.

pub mod energy;
pub mod error;
pub mod cutlocus;
pub mod flux;
pub mod frames;
pub mod geodesics;
pub mod icosphere;
pub mod jet;
pub mod metric;
pub mod ode;
pub mod tensor;

pub use error::{Error, Result};
