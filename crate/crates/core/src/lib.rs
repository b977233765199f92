//! The d-plane transform on R^n.
//!
//! Forward transform over affine d-planes, its adjoint as a Haar average over
//! the Grassmannian, the filtered-backprojection inversion, and a numerical
//! measurement of the symbol of the normal operator `R*R`.
//!
//! Modules:
//! - [`geometry`]: orthonormal frames, Haar sampling, projections, canonical relation points.
//! - [`constants`]: sphere/SO/Grassmannian volumes, microlocal dimension counts.
//! - [`phantoms`]: isotropic Gaussian mixtures with closed-form transforms.
//! - [`transform`]: forward transform, Monte Carlo backprojection, adjointness check.
//! - [`spectral`]: grid Fourier analysis, power multipliers, symbol estimation, FBP.
//! - [`grid`]: sampled fields on uniform n-D grids and their file formats.
//! - [`mc`]: deterministic random substreams and Monte Carlo accumulators.

pub mod constants;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod mc;
pub mod phantoms;
pub mod spectral;
pub mod transform;

pub use error::{Error, Result};
pub use geometry::{AffinePlane, CanonicalRelationPoint, Frame, Matrix, Vector};
pub use grid::{GridField, GridSpec};
pub use mc::{McEstimate, Substreams};
pub use phantoms::{GaussianMixture, GaussianTerm};
pub use spectral::{ConstantMode, SpectralField, SymbolReport};
pub use transform::{AnalyticSinogram, SinogramFunction};
