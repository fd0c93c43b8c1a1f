//! Two-phase (oil/water) slightly compressible flow on adaptive space-time
//! meshes.
//!
//! Each coarse time step is solved first on the coarsest space-time mesh,
//! then refined in time where the saturation front makes Newton struggle,
//! then refined in space where saturation varies strongly. Every refined
//! mesh is warm-started from the projection of the previous solution.
//! Non-matching space-time interfaces carry one flux unknown per sub-face
//! (enhanced velocity), so normal flux continuity is exact.

pub mod assembly;
pub mod driver;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod io;
pub mod mesh;
pub mod physics;
pub mod solver;
pub mod sparse;
pub mod state;
pub mod upscaling;

pub use error::{Error, Result};
