//! Lowest-order edge-element solver for the elliptic p-curl-curl problem
//!
//! ```text
//! curl(|curl B|^(p-2) curl B) = S,   div B = 0   in the box,
//! n x B = 0                                       on its boundary,
//! ```
//!
//! together with numerical checks of the supporting inequalities, the
//! discrete Helmholtz splitting, Friedrichs constants and Green's formulas.

pub mod assembly;
pub mod error;
pub mod helmholtz;
pub mod linalg;
pub mod mesh;
pub mod mms;
pub mod registry;
pub mod solver;
pub mod verify;
pub mod whitney;

pub use assembly::{EdgeField, FeSpace, NodalField, PExponent};
pub use error::{Error, Result};
pub use mesh::{build_box_mesh, Mesh, Point};
