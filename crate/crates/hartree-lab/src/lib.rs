//! Numerical laboratory for ground states of the Choquard (Schrödinger–Newton)
//! equation and the pseudo-relativistic Hartree equation on radial grids.
//!
//! The normalized nonrelativistic problem is
//!
//! ```text
//! -ΔQ - (|x|⁻¹ ∗ Q²) Q = -Q        on R³, Q radial, Q > 0,
//! ```
//!
//! and the pseudo-relativistic (boson-star) problem at mass parameter `m`,
//! speed of light `c`, and prescribed L² mass `N` is
//!
//! ```text
//! √(-c²Δ + m²c⁴) Q - (|x|⁻¹ ∗ Q²) Q = -μ Q,    ∫ Q² = N.
//! ```
//!
//! The crate solves both on a uniform radial grid, assembles and diagonalizes
//! the linearized operators per angular-momentum sector, and runs the limiting
//! experiments tying the two models together: the c → ∞ multiplier gap, the
//! H¹ convergence of profiles, energy-curve concavity, and the critical-mass
//! bracket beyond which the relativistic problem stops admitting a bound state.
//!
//! Module layout:
//! - [`grid`]: radial grids, quadrature, discrete sector Laplacians, norms.
//! - [`coulomb`]: Newton-theorem potentials and multipole kernels.
//! - [`specfun`]: half-integer Bessel functions and sector heat kernels.
//! - [`solve`]: ground-state solvers (fixed-point and shooting), energies,
//!   rescalings, Wronskian diagnostics.
//! - [`linops`]: dense sector linearizations and their spectra (feature
//!   `dense`).
//! - [`limits`]: nonrelativistic-limit sweeps, bound checks, energy curves,
//!   critical-mass estimation.
//! - [`cli`]: configuration and experiment orchestration (feature `cli`).

pub mod coulomb;
pub mod grid;
pub mod limits;
#[cfg(feature = "dense")]
pub mod linops;
pub mod solve;
pub mod specfun;

#[cfg(feature = "cli")]
pub mod cli;

mod error;
pub use error::{Error, Result};

#[doc(hidden)]
pub mod testsupport;
