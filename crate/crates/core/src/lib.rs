//! Planning and simulation toolkit for Bell tests whose detector settings are
//! chosen by photons from causally disconnected cosmic sources.
//!
//! - [`cosmology`]: FLRW distances and conformal time.
//! - [`causal`]: past-light-cone disjointness and threshold redshifts.
//! - [`photonstat`]: photon rates and coincidence probabilities.
//! - [`catalog`]: quasar catalogs, photometry and candidate search.
//! - [`randomness`]: Poisson arrival streams and setting-bit extraction.
//! - [`bellsim`]: CHSH/GHZ Monte Carlo and mutual-information audit.
//! - [`noisebudget`]: local-noise fraction against loophole budgets.
//! - [`pipeline`]: the end-to-end report.

// Negated float comparisons reject NaN on purpose; quadrature nodes are tabulated in full.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod bellsim;
pub mod catalog;
pub mod causal;
pub mod config;
pub mod cosmology;
pub mod diagram;
pub mod error;
pub mod improvement;
pub mod noisebudget;
pub mod numerics;
pub mod photonstat;
pub mod pipeline;
pub mod randomness;

pub use error::{Error, Result};
