//! Simulation and analysis toolkit for a phononic-crystal mechanical mode
//! coupled to a small ensemble of two-level-system (TLS) defects.
//!
//! The library is organized around the measurement chain of a dispersive
//! phonon-number experiment:
//!
//! - [`hilbert`]: operators and states on the truncated composite Hilbert
//!   space (one bosonic mode and N two-level systems).
//! - [`lindblad`]: master-equation time evolution with TLS collapse operators.
//! - [`experiments`]: virtual ringdown and displacement-interferometry runs.
//! - [`readout`]: Ramsey-signal synthesis/inversion and the downstream
//!   double-exponential, fringe, and envelope fits.
//! - [`tlsparams`]: microscopic TLS parameter estimates from material
//!   constants and discretized mode fields, plus the mBVD admittance model.
//! - [`montecarlo`]: Monte Carlo error propagation for fitted quantities.
//! - [`cli`]: config-driven batch pipelines behind the `phonon-tls` binary.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod fitting;
pub mod hilbert;
pub mod linalg;
pub mod lindblad;
pub mod montecarlo;
pub mod ode;
pub mod readout;
pub mod sparse;
pub mod tlsparams;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
