//! Limit model of a thin plate joined to a perpendicular thin rod.
//!
//! The plate is a Von Kármán plate, the rod carries bending and torsion, and the
//! two are coupled at the junction point through the stretching–bending
//! constraint on the rod center line. The crate solves the limit problem by
//! finite elements and Newton's method, and verifies the limit by evaluating the
//! rescaled 3D St Venant–Kirchhoff energy on an explicit recovery sequence.

pub mod cli;
pub mod config;
pub mod decomposition;
pub mod error;
pub mod expr;
pub mod fem;
pub mod forces;
pub mod geometry;
pub mod limit_model;
pub mod material;
pub mod recovery3d;
pub mod solver;

pub use error::{Error, Result};
pub use fem::{DofMap, LimitState, Model};
pub use forces::ForceData;
pub use geometry::{PlateDomain, PlateMesh, RodDomain, RodMesh};
pub use material::MaterialParams;

/// Tool version recorded in every result bundle.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
