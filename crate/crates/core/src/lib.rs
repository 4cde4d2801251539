//! Narrow-stencil finite-difference solvers for fully nonlinear elliptic
//! Dirichlet problems `F(D²u, ∇u, u, x) = 0` on uniform Cartesian grids.

pub mod error;
pub mod fd_ops;
pub mod grid;
pub mod problems;
pub mod scheme;
pub mod solver;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};
