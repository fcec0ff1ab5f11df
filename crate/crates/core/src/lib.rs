//! Numerical laboratory for the infinite robot rendezvous problem.
//!
//! Robots indexed by the integers chase their neighbours on the complex
//! plane. The one-sided dynamics `x_k' = x_{k-1} - x_k` and the symmetric
//! dynamics `x_k' = (x_{k-1} + x_{k+1})/2 - x_k` are solved exactly by
//! convolving the initial constellation with Poisson and Bessel weight
//! kernels. Around that core sit:
//!
//! - [`constellations`]: lazily evaluated bounded sequences with tail metadata,
//! - [`kernels`]: certified-truncation weight kernels and trajectory evaluation,
//! - [`cesaro`]: sup-norm Cesàro deviations, limit extraction and goodness verdicts,
//! - [`integrator`]: an adaptive Dormand-Prince oracle for truncated lattices,
//! - [`rates`]: sup-deviation decay curves, log-log fits and the finite circulant case,
//! - [`platoon`]: the position/velocity/acceleration platoon with mode analysis.

mod certify;
pub mod cesaro;
pub mod constellations;
mod error;
pub mod integrator;
pub mod kernels;
pub mod platoon;
pub mod rates;

pub use num_complex::Complex64;

pub use cesaro::{CesaroReport, Verdict};
pub use constellations::{Constellation, IndexWindow, TailClass};
pub use error::{Error, Result};
pub use integrator::{Boundary, SystemKind, Tolerances, TruncatedSystem};
pub use kernels::{DynamicsKind, KernelWeights, Sampling, TrajectorySample};
pub use platoon::{ModeSpectrum, PlatoonParams};
pub use rates::RateFit;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default certified truncation budget for kernel weights.
pub const DEFAULT_EPS_TAIL: f64 = 1e-12;
