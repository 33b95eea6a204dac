//! Finite-mode simulator for the ultraviolet-regularized Nelson model in the
//! mean-field regime.
//!
//! The crate evolves three coupled layers of the same finite-mode model and
//! cross-checks them against each other:
//!
//! * [`skg`] — the classical Schrödinger–Klein–Gordon system for the
//!   condensate wave function and the coherent field amplitude, together with
//!   the accumulated gauge phase.
//! * [`quad`] — the quadratic (Bogoliubov) fluctuation layer: block
//!   generators, the Bogoliubov map, the generalized one-particle density and
//!   the next-order one-point functions.
//! * [`hierarchy`] / [`exact`] — the 1/√N correction hierarchy on the
//!   truncated double Fock space, and the exact many-body evolution on the
//!   N-particle sector used as the ground-truth oracle.
//!
//! All fields live on a finite lattice of momenta (see [`model`]); every
//! product is a truncated convolution in momentum space, so the layers agree
//! algebraically to rounding rather than up to discretization mismatch.

pub mod config;
pub mod densities;
pub mod error;
pub mod exact;
pub mod fock;
pub mod hierarchy;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod report;
pub mod skg;

/// Scalar type used by all floating-point numerics.
pub type Real = f64;
/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;

pub use error::Error;
