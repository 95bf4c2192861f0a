//! Multilevel-correction multigrid solver for nonlinear elliptic eigenvalue
//! problems of the form -Δu + f(x,u) = λu with homogeneous Dirichlet boundary
//! conditions and the normalization ∫ u² = 1, discretized with P1 finite
//! elements on structured meshes of the unit interval and unit square.
//!
//! The solver replaces one large nonlinear eigensolve on the finest mesh by a
//! chain of linear multigrid solves on refining meshes plus small nonlinear
//! eigensolves on a fixed coarse space augmented by the current fine-level
//! approximation. See the README for the CLI and the report formats.

pub mod assembly;
pub mod config;
pub mod eigen;
pub mod error;
pub mod mesh;
pub mod multigrid;
pub mod report;
pub mod scheme;
pub mod sparse;

pub use error::{Error, Result};
pub use mesh::{build_hierarchy, Domain, MeshHierarchy, MeshLevel};
pub use sparse::{CsrMatrix, NodalVector};
