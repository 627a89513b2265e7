//! Reversible area-preserving maps of the two-torus: evaluation, symmetric periodic
//! orbits, cocycle classification, local perturbations and the closing construction.
//!
//! The geometric layers are generic over the scalar type ([`Scalar`], implemented for
//! `f32` and `f64`); the aliases at the crate root fix `f64`.

pub mod bump;
pub mod closing;
pub mod cocycle;
pub mod harness;
pub mod involution;
pub mod linalg;
pub mod maps;
pub mod orbits;
pub mod perturb;
pub mod portrait;
pub mod scalar;
pub mod torus;
pub mod validation;

pub use scalar::Scalar;

pub type Point = torus::Point<f64>;
pub type Vec2 = linalg::Vec2<f64>;
pub type Mat2 = linalg::Mat2<f64>;
pub type Bump = bump::Bump<f64>;
pub type Generator = bump::Generator<f64>;
pub type InvolutionSpec = involution::InvolutionSpec<f64>;
pub type FixSet = involution::FixSet<f64>;
pub type MapSpec = maps::MapSpec<f64>;
pub type Layer = maps::Layer<f64>;
