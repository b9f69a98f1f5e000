//! Semi-discrete optimal transport between a measure carried by a triangle
//! soup in 3D and a finitely supported measure, solved with a damped Newton
//! method on restricted Laguerre diagrams.
//!
//! The main entry points are [`solver::damped_newton`] for a single transport
//! problem and the three applications in [`apps`]: optimal quantization,
//! remeshing through the dual of the diagram, and OT-driven rigid
//! registration.

pub mod apps;
pub mod error;
pub mod geometry;
pub mod io;
pub mod laguerre;
pub mod measures;
pub mod shapes;
pub mod solver;
pub mod spatial;
pub mod transport;

pub use error::{Error, Result};
pub use geometry::Vec3;
pub use laguerre::{compute_diagram, RestrictedLaguerreDiagram};
pub use measures::{SimplexSoup, SiteSet, WeightVector};
pub use solver::{damped_newton, SolveReport, SolverConfig};
