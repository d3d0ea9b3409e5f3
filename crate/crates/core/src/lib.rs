//! Matrix-factorization recommenders trained by alternating least squares,
//! with the two regularization weights tuned by empirical Bayes.
//!
//! The pieces, bottom up:
//!
//! - [`data`]: MovieLens ingestion, sparse rating storage, train/test splits.
//! - [`numerics`]: Cholesky solves, Frobenius norms, seeded random streams.
//! - [`als`]: the regularized loss, ALS training and RMSE.
//! - [`mh`]: a Metropolis–Hastings kernel over the factors.
//! - [`eb`]: the stochastic-approximation loop that tunes `(λ₁, λ₂)`.
//! - [`grid`]: the grid-search baseline.
//! - [`trace`]: moving-average smoothing of tuner traces.
//!
//! The `book/` directory at the repository root walks through the same
//! material with runnable examples.

pub mod als;
pub mod data;
pub mod eb;
pub mod error;
pub mod grid;
pub mod mh;
pub mod numerics;
pub mod trace;

pub use als::{als_train, boltzmann_energy, init_factors, rmse, AlsConfig, FactorPair, HyperParams, TrainReport};
pub use data::{build_sparse, parse_csv, parse_tab, split, RatingFormat, RatingTriple, SparseRatings, SplitPair};
pub use eb::{tune_eb, SAConfig, SaTrace, TuneResult};
pub use error::{Error, Result};
pub use grid::{grid_tune, GridReport, GridSpec};
pub use mh::{mh_step, ChainState, ProposalConfig};
pub use numerics::{DenseMatrix, RngStream};
pub use trace::{smooth, SmoothedTrace};

// The book's chapters, compiled so that their examples run as doctests.
#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    pub mod data {}
    #[doc = include_str!("../../../book/src/als.md")]
    pub mod als {}
    #[doc = include_str!("../../../book/src/sampler.md")]
    pub mod sampler {}
    #[doc = include_str!("../../../book/src/empirical-bayes.md")]
    pub mod empirical_bayes {}
    #[doc = include_str!("../../../book/src/grid-search.md")]
    pub mod grid_search {}
    #[doc = include_str!("../../../book/src/traces.md")]
    pub mod traces {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
