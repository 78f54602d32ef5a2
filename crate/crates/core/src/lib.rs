//! Laboratory for nearest-neighbor lattice spin systems.
//!
//! The crate builds finite boxes of the integer lattice, equips them with
//! nearest-neighbor spin models (Ising, Potts, hard-core, or custom
//! potentials), and studies Markov-chain dynamics for the associated Gibbs
//! measures. Every dynamics is available in two forms that are kept honest
//! against each other: a random-mapping sampler and, on small instances, an
//! exact row-stochastic matrix. On top of the exact form sit spectral-gap
//! computations and verifiers for a family of comparison inequalities
//! between single-site, block, tiled-block, and cluster dynamics; on top of
//! the sampler form sit coupling experiments and strong-spatial-mixing
//! scans.
//!
//! Numeric code is generic over the scalar type through [`Scalar`]; the
//! crate-root aliases [`Real`] (`f64`, the default everywhere) and
//! [`Real32`] pick concrete instantiations.

pub mod chain;
pub mod compare;
pub mod coupling;
pub mod experiment;
pub mod geometry;
pub mod kernels;
pub mod measure;
pub mod model;
pub mod sampler;
pub mod spectral;
pub mod ssm;
pub mod stream;

mod error;

pub use error::{Error, Result};

use num_traits::FromPrimitive;

/// Scalar type the numeric core is generic over.
///
/// `nalgebra::RealField` supplies the transcendental functions and keeps the
/// dense eigensolvers generic; `FromPrimitive` converts literals and counts.
/// Implemented by `f32` and `f64`.
pub trait Scalar:
    nalgebra::RealField + FromPrimitive + Copy + Default + std::iter::Sum<Self> + std::fmt::LowerExp
{
}

impl<T> Scalar for T where
    T: nalgebra::RealField
        + FromPrimitive
        + Copy
        + Default
        + std::iter::Sum<T>
        + std::fmt::LowerExp
{
}

/// Default scalar used by the shipped experiments and the CLI.
pub type Real = f64;

/// Single-precision alias; useful for memory-bound sampling sweeps.
pub type Real32 = f32;

/// Converts an `f64` constant into the working scalar type.
pub fn scalar<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("f64 constant must convert into the scalar type")
}

/// Converts a count into the working scalar type.
pub fn scalar_usize<S: Scalar>(n: usize) -> S {
    S::from_usize(n).expect("usize count must convert into the scalar type")
}
