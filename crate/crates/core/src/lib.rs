//! Eulerian CutFEM solver for the heat equation on moving domains.
//!
//! A fixed background triangulation is intersected each time step with the
//! current domain `Ω(t_n)` and a `δ`-neighbourhood around it. The discrete
//! solution lives on the active cells, boundary conditions are imposed weakly
//! with Nitsche's method and a ghost penalty on facets near the boundary
//! extends the solution into the strip so that the next step can read it.
//! Time stepping is Crank-Nicolson.
//!
//! Module map:
//!
//! - [`mesh`]: background triangulation of the bounding box
//! - [`geometry`]: level-set domains, cell classification, active meshes
//! - [`quadrature`]: reference rules and cut-cell decomposition
//! - [`fespace`]: continuous P1/P2 Lagrange spaces with activity masks
//! - [`forms`]: per-step matrices and right-hand side
//! - [`linalg`]: sparse storage and the nonsymmetric solver
//! - [`timestepper`]: the full scheme
//! - [`analysis`]: error norms and convergence-order fits
//! - [`manufactured`]: closed-form test problems
//! - [`config`] and [`experiment`]: configuration files and convergence grids
//! - [`vtk`]: legacy-VTK debug output

pub mod analysis;
pub mod config;
pub mod error;
pub mod experiment;
pub mod fespace;
pub mod forms;
pub mod geometry;
pub mod linalg;
pub mod manufactured;
pub mod mesh;
pub mod quadrature;
pub mod timestepper;
pub mod vtk;

pub use error::{Error, Result};

/// Points and vectors in the plane.
pub type Point = nalgebra::Vector2<f64>;
