//! Spectral simulation and stability analysis of a droplet sliding down an
//! inclined plane.
//!
//! The contact line is a star-shaped curve `R_ref + ρ(θ)` stored by its
//! Fourier coefficients. Each velocity evaluation solves
//! `-Δu = μx¹ + λ`, `u = 0` on the boundary, `∫u = V`, by particular
//! solutions plus a least-squares harmonic polynomial, then applies the
//! contact-line law `V_n = F(-∂_ν u)`.
//!
//! The numerics are generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix `f64`.

pub mod decomposition;
pub mod dynamics;
pub mod elliptic;
pub mod error;
pub mod geometry;
pub mod linearization;
pub mod scalar;
pub mod validation;

pub use error::{Error, Result};

pub type Coeffs = geometry::FourierCoeffs<f64>;
pub type Circle = geometry::ReferenceCircle<f64>;
pub type Shape = geometry::BoundaryShape<f64>;
pub type Params = elliptic::ModelParams<f64>;
pub type Field = elliptic::FieldSolution<f64>;
pub type Solver = elliptic::EllipticSolver<f64>;
pub type Law = dynamics::ContactLineLaw<f64>;
pub type DropletModel = dynamics::Model<f64>;
pub type Operator = linearization::OperatorMatrix<f64>;
pub type EigenSpectrum = linearization::Spectrum<f64>;
pub type State = decomposition::DecomposedState<f64>;
