//! Numerical machinery for semilinear parabolic problems near resonance:
//! exact Dirichlet spectra on model domains, Galerkin semiflows, invariant
//! manifolds computed as fixed points on exponentially weighted trajectory
//! spaces, reduced center dynamics with certified invariant annuli, and
//! multi-root equilibrium continuation.
//!
//! Everything is generic over the working scalar through [`Scalar`];
//! the aliases at the crate root fix the default `f64` instantiation.

// Guards written as `!(x > 0)` are deliberate: they reject NaN along with
// the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equilibria;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod lyapunov_perron;
pub mod nonlinearity;
pub mod quadrature;
pub mod reduced;
pub mod scalar;
pub mod semiflow;
pub mod spectral;

pub use error::{CoreError, Result};
pub use scalar::Scalar;

/// Default-precision aliases.
pub type Domain = spectral::DomainSpec<f64>;
pub type Basis = spectral::SpectralBasis<f64>;
pub type Split = spectral::SpectralSplit<f64>;
pub type Field = spectral::CoefField<f64>;
pub type Nonlinearity = nonlinearity::NonlinearitySpec<f64>;
pub type Trajectory = semiflow::TrajectorySegment<f64>;
pub type Graph = lyapunov_perron::ManifoldGraph<f64>;
pub type Annulus = reduced::AnnulusSpec<f64>;
