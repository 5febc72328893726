//! Solvers and a verification harness for scalar and vector-valued
//! variational inequalities with gradient constraints.
//!
//! The library is organized around two equivalences: a gradient-constrained
//! minimization equals a double-obstacle problem whose obstacles are
//! anisotropic boundary distances, and the vector-valued problem reduces to
//! a scalar one along its source direction. Both sides of each equivalence
//! are solved independently — projected SOR for the obstacle form, operator
//! splitting for the constrained form — and the agreement, feasibility, and
//! interior second-derivative bounds are measured rather than assumed.

pub mod config;
pub mod convex;
pub mod distance;
pub mod error;
pub mod field;
pub mod grid;
pub mod io;
pub mod matrix;
pub mod obstacle;
pub mod operators;
pub mod regularity;
pub mod runner;
pub mod splitting;
pub mod stats;
pub mod vector;

pub use convex::{pnorm_b_constant, BodyFamily, ConvexBody, Halfspace};
pub use error::{Error, Result};
pub use field::{ScalarField, VectorField};
pub use grid::{build_grid, DomainShape, GridDomain, NodeClass};
pub use stats::SolveStats;
