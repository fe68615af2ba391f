//! Reliability coefficients and variance-component estimators.
//!
//! Classical coefficients (KR20, KR21, the definitional ratio), one-way
//! ANOVA with random-effects components and the intraclass correlation,
//! principal-component factor analysis with varimax and ω, maximum
//! likelihood for covariance matrices that are linear in known bases, and a
//! Metropolis sampler for a latent location model. The [`bench`] module
//! compares the estimators on simulated data; [`cli`] backs the `simbench`
//! binary.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anova;
pub mod bench;
pub mod cli;
pub mod covstruct;
pub mod efa;
pub mod error;
pub mod ingest;
pub mod matrix;
pub mod mcmc;
pub mod reliability;
pub mod sampling;
pub mod special;

pub use error::{Error, Result};
pub use matrix::SymMatrix;
pub use sampling::{RngSeed, SampleSet, ScatterMatrix};
