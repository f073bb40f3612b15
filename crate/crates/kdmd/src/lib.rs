//! Companion-matrix dynamic mode decomposition with mean-subtraction
//! diagnostics and mode-norm spectral pruning.
//!
//! The crate is organized as a small stack:
//!
//! * [`linalg`] — complex dense kernels (truncated-SVD pseudo-inverse,
//!   Vandermonde/companion constructors, projectors);
//! * [`dmd`] — the companion-DMD fit, modes, reconstruction and forecasting;
//! * [`preprocess`] — mean subtraction and delay embedding in both orders;
//! * [`dft`] — the relative-distance-to-DFT indicator and the
//!   data-sufficiency scan it supports;
//! * [`pruning`] — mode-norm pruning, the KMD-Quality score and the
//!   mean-subtraction efficacy predicate;
//! * [`denoise`] — TLS and noise-resistant companion-DMD variants;
//! * [`systems`] — LTI and Van der Pol test-system generators plus CSV I/O;
//! * [`sweep`] — the ensemble experiment harness behind the CLI.

pub mod denoise;
pub mod dft;
pub mod dmd;
pub mod error;
pub mod linalg;
pub mod preprocess;
pub mod pruning;
pub mod sweep;
pub mod systems;

pub use error::{KdmdError, Result};
