//! Numerical tools for volume-constrained critical points of capillarity
//! functionals on parametric surfaces of sphere type.
//!
//! A surface is a map `u: S² → ℝ³`, discretized as a piecewise-linear map on a
//! geodesic icosphere. The central objects are
//!
//! * the Dirichlet integral `D(u) = ½∫|∇u|²`, the area `A(u) = ∫|u_x∧u_y|`,
//! * the algebraic volume `V(u) = ⅓∫u·u_x∧u_y`,
//! * the weighted volume `Q(u) = ∫Q_K(u)·u_x∧u_y` for a curvature weight `K`
//!   with `div Q_K = K`,
//! * the energies `E = D + Q` and `F_K = A + Q`.
//!
//! On top of these the crate provides isovolumetric minimization on the
//! constraint set `M_t = {V = t}`, Palais–Smale residuals, the barycenter map,
//! topological degree computations and a three-parameter mountain-pass
//! search over families of surfaces.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod export;
pub mod fields;
pub mod functionals;
pub mod mesh;
pub mod minimax;
pub mod optimize;
pub mod quadrature;
pub mod samples;
pub mod sparse;

pub use error::{Error, Result};

/// Points and vectors of ℝ³.
pub type Point3 = nalgebra::Vector3<f64>;
