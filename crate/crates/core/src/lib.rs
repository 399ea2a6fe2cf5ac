//! Second-quantized Dirac evolution in external fields at finite truncation.
//!
//! The crate is organised bottom-up:
//!
//! * [`spinor`]: 4×4 Dirac algebra, free Hamiltonian symbol, spectral projectors.
//! * [`grid`], [`potential`]: momentum lattice, Fourier maps, Gaussian four-potentials.
//! * [`operator`], [`field`]: one-particle operators, the interaction `Z`, the dressing
//!   operator `Q`, Hilbert–Schmidt diagnostics.
//! * [`dynamics`]: propagators, Born series, dressing, pair creation, gauge checks, scans.
//! * [`wedge`], [`fock`]: determinant inner products of Dirac seas, lifts, CAR operators.
//! * [`container`]: binary matrix container and CSV export.

pub mod container;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod fock;
pub mod grid;
pub mod operator;
pub mod potential;
pub mod quadrature;
pub mod spinor;
pub mod wedge;

mod parallel;

pub use error::{Error, Result};
pub use grid::{DenseBudget, Grid, GridSpec};
pub use operator::{GridOperator, Sign, Space};
pub use parallel::{set_threads, threads};
pub use potential::{EnvelopeKind, GaussianComponent, PotentialSpec, TimeEnvelope};
pub use spinor::{PhysicsParams, SpinorMatrix};

/// Scalar type used throughout.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix.
pub type Matrix = faer::Mat<faer::complex_native::c64>;

pub(crate) use faer::complex_native::c64;

#[inline]
pub(crate) fn to_f(z: C64) -> c64 {
    c64::new(z.re, z.im)
}

#[inline]
pub(crate) fn to_n(z: c64) -> C64 {
    C64::new(z.re, z.im)
}
