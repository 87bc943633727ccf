//! Numerical and exact-arithmetic toolkit for decay rates of variable-exponent
//! power-law fluids on periodic boxes.

pub mod analysis;
pub mod bootstrap;
pub mod container;
pub mod decay;
pub mod error;
pub mod exponent_field;
pub mod grid;
pub mod heat;
pub mod initial_data;
pub mod scalar;
pub mod solver;
pub mod spectral;
pub mod tensor_stress;

pub use error::{Error, Result};
pub use scalar::{Exact, Real};

/// Exact rational used by the exponent algebra.
pub type Rational = num_rational::BigRational;

pub type Grid64 = grid::Grid<f64>;
pub type Layout64 = spectral::SpectralLayout<f64>;
pub type Field64 = spectral::SpectralField<f64>;
pub type Field32 = spectral::SpectralField<f32>;
pub type Exponent64 = exponent_field::ExponentField<f64>;
pub type Solver64 = solver::Solver<f64>;
pub type Series64 = decay::DecaySeries<f64>;
pub type Ladder = bootstrap::LadderState<Rational>;
pub type Term = bootstrap::PowerLogTerm<Rational>;
