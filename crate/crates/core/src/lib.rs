//! Kernel fairness measures built on normalized (conditional) cross-covariance
//! operators, with a differentiable regularizer for fair training.
//!
//! The crate covers the full pipeline:
//!
//! * [`data`]: manifest-driven CSV ingestion and deterministic splits
//! * [`kernels`]: Gaussian kernels, median-heuristic bandwidths, Gram matrices
//! * [`operators`]: proxy operators and the dependence statistics and scores
//! * [`lowrank`]: incomplete Cholesky factors and an `O(r²N)` score path
//! * [`score`]: scores computed directly from data matrices
//! * [`inference`]: (conditional) permutation tests
//! * [`fairlearn`]: models, the regularized objective, gradients and training
//! * [`metrics`]: DEO, DI, accuracy/MSE and evaluation reports
//! * [`cli`]: the `faircocco` command-line front end

pub mod cli;
pub mod data;
pub mod error;
pub mod fairlearn;
pub mod inference;
pub mod kernels;
pub mod lowrank;
pub mod metrics;
pub mod operators;
pub mod score;

pub use data::{binarise_at_median, ingest, load_manifest, DatasetManifest, DatasetTable, Task};
pub use error::{Error, Result};
pub use kernels::{center, extended_gram, gram, median_heuristic, GramMatrix, KernelConfig};
pub use operators::{faircocco_score, proxy, FairnessStatistic, Notion, ProxyMatrix, ProxySet};

pub use score::{score_from_data, ScoreOptions};
