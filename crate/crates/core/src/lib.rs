//! Numerical kernels for future-included complex-action quantum mechanics
//! on truncated finite-dimensional spaces.
//!
//! The crate is organized around five pieces:
//!
//! - [`spectral`]: eigendecomposition of generic complex Hamiltonians and
//!   the proper (Q-metric) inner products that make them Q-normal;
//! - [`dynamics`]: exact spectral-form time development, normalized-state
//!   dynamics, and the automatic-hermiticity suppression diagnostics;
//! - [`fock`]: the truncated-oscillator realization of the non-Hermitian
//!   coordinate/momentum pair and their coherent-state eigenkets;
//! - [`contour`]: complex integration paths, Gauss-Legendre quadrature and
//!   the smeared delta function calculus;
//! - [`future_included`]: two-boundary (pre/post-selected) expectation
//!   values, probability density/current, and the correspondence to the
//!   future-not-included description.
//!
//! All operations are pure functions over immutable inputs and safe to use
//! from parallel sweeps.

pub mod contour;
pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod fock;
pub mod future_included;
pub mod linalg;
pub mod params;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};
pub use params::Params;
