//! Numerical laboratory for the kinetic Cucker-Smale equation with strong local
//! alignment and noise, its Euler-flocking hydrodynamic limit, and the entropy
//! and relative-entropy functionals that connect the two.
//!
//! Everything is one-dimensional in position and velocity.

// `!(x > 0.0)` is used on purpose: it rejects NaN together with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod entropy;
pub mod error;
pub mod euler;
pub mod grid;
pub mod harness;
pub mod kinetic;
pub mod model;

pub use error::{FlockError, Result};
pub use grid::{Boundary, PhaseGrid, SpaceGrid};
pub use model::{KineticState, MacroState, Moments, Potential, PotentialSpec};
