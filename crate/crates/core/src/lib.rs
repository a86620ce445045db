//! Solvers and optimization machinery for the boundary control of the viscous
//! Cahn-Hilliard equation with dynamic boundary conditions.
//!
//! The state system couples a bulk evolution on a domain Ω with a dynamic
//! boundary condition on Γ:
//!
//! ```text
//!   ∂_t y − Δw = 0,          w = τ ∂_t y − Δy + f'(y)          in Ω × (0,T)
//!   ∂_n w = 0,               ∂_t y_Γ + ∂_n y − Δ_Γ y_Γ + f_Γ'(y_Γ) = u_Γ   on Γ × (0,T)
//! ```
//!
//! where `f`, `f_Γ` are double-well potentials (quartic or logarithmic) and the
//! boundary source `u_Γ` is the control. The crate provides:
//!
//! - [`geometry`]: uniform-grid discretizations of Ω/Γ (a 1D interval and a
//!   2D x-periodic strip) with mimetic difference operators whose
//!   summation-by-parts identities hold to rounding,
//! - [`potential`]: the potential families with derivatives up to third order
//!   and the convex/concave splitting of `f'`,
//! - [`neumann`]: the inverse Neumann Laplacian on zero-mean fields and the
//!   mean-reconstruction operator used to decouple the adjoint system,
//! - [`state`]: implicit-Euler time stepping (fully implicit or convex-split)
//!   with damped Newton and sparse direct linear solves,
//! - [`tangent`]: the exact linearization of the discrete update map,
//! - [`adjoint`]: the discrete-transpose adjoint and the decoupled
//!   q-plus-reconstruction form, interchangeable by construction,
//! - [`optimizer`]: tracking cost, box projection, projected-gradient descent,
//!   and first-order optimality certificates,
//! - [`verify`]: independent oracles (finite differences, Taylor remainders,
//!   stability ratios, conservation recomputation) used by the acceptance
//!   suite and the CLI report commands.

pub mod adjoint;
pub mod control;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod neumann;
pub mod optimizer;
pub mod potential;
pub mod state;
pub mod tangent;
pub mod verify;

pub use error::ChcError;
pub use geometry::{BoundaryField, CoupledField, Geometry, InteriorField, Mode};
pub use potential::{PotentialKind, PotentialPair, PotentialSpec};
