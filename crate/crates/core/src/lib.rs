//! Numerical toolkit for quantitative ergodic theory on tori: concrete
//! group actions, trigonometric observables, exponential sums, rate
//! estimators and exponent calculus.
//!
//! The numerical core is generic over [`scalar::Real`] (`f32`, `f64`); the
//! exponent formulas in [`rates`] also accept exact rationals. The aliases
//! below fix the scalar to `f64`, which is what the command line tool uses.

pub mod error;
pub mod estimators;
pub mod expsum;
pub mod kernels;
pub mod observables;
pub mod phase;
pub mod quad;
pub mod rates;
pub mod scalar;
pub mod sum;
pub mod systems;

pub use error::{Error, Result};
pub use num_complex::Complex;
pub use scalar::{Exact, Real};

pub type StatePoint = systems::StatePoint<f64>;
pub type GroupElement = systems::GroupElement<f64>;
pub type SystemSpec = systems::SystemSpec<f64>;
pub type FourierObservable = observables::FourierObservable<f64>;
pub type TrigFunction = observables::TrigFunction<f64>;
pub type TriangleKernel = kernels::TriangleKernel<f64>;
pub type RateSample = estimators::RateSample<f64>;
pub type RateFit = rates::RateFit<f64>;
pub type ExponentInputs = rates::ExponentInputs<f64>;
