//! Discrete fractional Schrödinger operators `A^s + q` on mass-weighted
//! meshes and graphs: spectral calculus, resolvents and semigroups,
//! source-to-solution maps, internal spectral data, and reconstruction of
//! the potential from source-to-solution data.
//!
//! Everything is generic over [`Real`]; the aliases below fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domain;
pub mod error;
pub mod inverse;
pub mod linalg;
pub mod resolvent;
pub mod s2s;
pub mod scalar;
pub mod spectral;
pub mod specdata;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Mat = linalg::Matrix<f64>;
pub type Grid = domain::GridFunction<f64>;
pub type Manifold = domain::DiscreteManifold<f64>;
pub type Decomposition = spectral::SpectralDecomposition<f64>;
pub type Frac = spectral::FracOperator<f64>;
pub type Pot = spectral::Potential<f64>;
pub type Resolvent = resolvent::ResolventOp<f64>;
pub type SpecData = specdata::InternalSpectralData<f64>;
pub type S2s = s2s::SourceToSolutionOp<f64>;
pub type Diagonalized = s2s::DiagonalizedOperator<f64>;
pub type Problem = inverse::InverseProblem<f64>;
pub type Reconstruction = inverse::ReconstructionResult<f64>;
