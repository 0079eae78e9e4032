//! Nonconforming virtual element method (VEM) for the 2D Laplace
//! eigenvalue and source problems on general polygonal meshes.
//!
//! The crate is organized around the pipeline
//!
//! ```text
//! mesh  ->  polybasis  ->  vemspace  ->  forms  ->  eigsolve  ->  harness
//! ```
//!
//! * [`mesh`] — polygonal meshes, the benchmark mesh families and a
//!   Lloyd-relaxed Voronoi generator, mesh-regularity reporting;
//! * [`polybasis`] — scaled monomial bases, exact polygon integration and
//!   L² projections on edges and elements;
//! * [`vemspace`] — degrees of freedom, interpolation, and the elliptic
//!   and L² projector matrices computed from dofs alone;
//! * [`forms`] — stabilized stiffness / (non)stabilized mass matrices and
//!   global sparse assembly;
//! * [`eigsolve`] — generalized symmetric eigensolver (robust to a
//!   semidefinite mass matrix), source solves, discrete error norms;
//! * [`harness`] — convergence studies, tau sweeps, rate fitting, CSV/JSON
//!   emission; drives everything from an [`harness::ExperimentConfig`].

// Ensure the system BLAS/LAPACK provider is linked.
extern crate openblas_src as _openblas;

pub mod eigsolve;
pub mod forms;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod polybasis;
pub mod quadrature;
pub mod sparse;
pub mod vemspace;

/// 2D point in domain coordinates.
pub type Point2 = nalgebra::Point2<f64>;
/// 2D vector (directions, normals, gradients).
pub type Vector2 = nalgebra::Vector2<f64>;
