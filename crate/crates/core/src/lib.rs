//! Numerical laboratory for the anti-invariant cohomology of almost complex
//! structures on compact 4-manifold models.
//!
//! The crate computes the dimension `h^-_J` of the cohomology subgroup
//! representable by J-anti-invariant closed 2-forms, on two kinds of models:
//! a flat 4-torus discretised by Fourier collocation, and invariant
//! (constant-coefficient) models of nilmanifolds. On top of that sit
//! constructors for explicit families of almost complex structures with
//! closed-form predictions, Hermitian-geometry diagnostics, and a Newton
//! solver for the symplectic Calabi-Yau ("type D") constraint.

pub mod calabi_yau;
pub mod calculus;
pub mod error;
pub mod families;
pub mod field;
pub mod grid;
pub mod anti_invariant;
pub mod hermitian;
pub mod hodge;
pub mod lie;
pub mod io;
pub mod pointwise;
pub mod spectral;
pub mod suites;

pub use error::{Error, Result};
