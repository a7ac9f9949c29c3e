//! Kernel canonical correlation analysis with Nyström column selection.
//!
//! The crate covers the full pipeline: Gaussian kernels and centering, ridge
//! leverage scores, weighted column sampling, Nyström factors with an
//! incremental Cholesky/QR state machine, exact and low-rank KCCA solvers
//! along a path of ranks, a random Fourier feature baseline, and dense
//! verifiers for the approximation and stability bounds.

pub mod baselines;
pub mod datasets;
pub mod diagnostics;
pub mod error;
pub mod kcca;
pub mod kernels;
pub mod leverage;
pub mod linalg;
pub mod nystrom;
pub mod sampling;

pub use error::{Error, Result};
pub use faer::Mat;
