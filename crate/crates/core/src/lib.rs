//! Robust model predictive control with concentric containers and varying
//! tubes, for constrained linear systems under additive and multiplicative
//! disturbance. The crate covers the full synthesis pipeline: polytope set
//! algebra, system validation, container construction and optimization,
//! terminal-set computation, offline constraint tightening, the online QP
//! controller, and closed-loop simulation with region-of-attraction
//! estimation.

pub mod geometry;
pub mod container;
pub mod model;
pub mod terminal;
pub mod util;

pub use geometry::{GeometryError, HPolytope, SupportOffset, VPolytope};
pub use model::{UncertainSystem, ValidationReport};
