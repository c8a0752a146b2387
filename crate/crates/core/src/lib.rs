//! Random forests with nearly-free confidence intervals for their
//! generalization error.
//!
//! Training a bagged ensemble leaves two byproducts behind: for every
//! observation, the set of trees that never saw it (its *out-of-bag*
//! subforest, about `e^-1 ≈ 36.8%` of the ensemble), and each tree's
//! prediction for it. Averaging every observation's out-of-bag loss gives
//! the classic point estimate of the generalization error; this crate also
//! resamples those per-observation losses to build percentile-bootstrap
//! confidence intervals around it — no data splitting, no retraining.
//!
//! ```
//! use oob_forest::{datagen, forest, oobci, Task, TreeParams};
//!
//! let data = datagen::friedman(120, 7)?;
//! let params = TreeParams::defaults(Task::Regression, data.n_features());
//! let rf = forest::train_forest(&data, 60, &params, 42)?;
//!
//! let aug = oobci::build_augmented(&rf, &data)?;
//! let errors = oobci::per_observation_errors(&aug, &data)?;
//! let ci = oobci::bootstrap_ci(&errors, 0.95, 1000, 42)?;
//! assert!(ci.lower <= ci.point_estimate && ci.point_estimate <= ci.upper);
//! # Ok::<(), oob_forest::Error>(())
//! ```
//!
//! The [`montecarlo`] module reproduces the coverage study that validates
//! the intervals on two synthetic processes ([`datagen`]), and [`ingest`]
//! loads real CSV data. The `oob-forest` binary exposes all of it on the
//! command line. The `book/` directory of the repository walks through the
//! concepts chapter by chapter; its code snippets compile and run as part of
//! this crate's doc-tests.

pub mod data;
pub mod datagen;
mod error;
pub mod forest;
pub mod ingest;
pub mod montecarlo;
pub mod oobci;
pub mod rng;
pub mod special;

pub use data::{Cell, Column, Dataset, Response, Task};
pub use error::{Error, Result};
pub use forest::{Forest, Prediction, Tree, TreeParams, train_forest};
pub use oobci::{AugmentedSample, CiResult, ErrorVector};

// Keep the book chapters and README honest: their code blocks compile and
// run under `cargo test --doc`.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(readme, "../../../README.md");
    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(forests, "../../../book/src/forests.md");
    chapter!(intervals, "../../../book/src/intervals.md");
    chapter!(synthetic, "../../../book/src/synthetic.md");
    chapter!(coverage, "../../../book/src/coverage.md");
    chapter!(cli, "../../../book/src/cli.md");
}
