//! Hierarchical Wasserstein alignment of clustered point clouds.
//!
//! Given two datasets that each decompose into `S` clusters of points in
//! `ℝ^D`, this crate recovers an orthogonal transform `R` and a soft
//! cluster correspondence `P` between them by minimizing a nested
//! (hierarchical) entropic optimal-transport objective: the outer level
//! matches clusters, the inner level matches points within cluster pairs,
//! and the transform is shared across all pairs.
//!
//! The solver is a consensus ADMM scheme: every cluster pair `(i, j)`
//! maintains its own transform `R_ij` and point coupling `Q_ij`, the pair
//! subproblems are solved in parallel, and an SVD-based consensus step
//! pulls all `R_ij` toward a single global `R`.
//!
//! Module map:
//! - [`transport`] — cost matrices, Sinkhorn scaling (with a log-domain
//!   fallback), transport cost and negative entropy.
//! - [`manifold`] — orthogonal-Procrustes solves over the orthogonal
//!   group, plus Haar-random orthogonal sampling.
//! - [`solver`] — the ADMM orchestrator and its subproblem/update steps.
//! - [`datagen`] — synthetic low-rank Gaussian mixtures on subspaces with
//!   known ground truth.
//! - [`diagnostics`] — evaluation metrics, a cluster-disambiguity
//!   criterion, and alignment perturbation bounds.
//! - [`io`] — the CSV dataset format and JSON truth/result files used by
//!   the CLI.

pub mod dataset;
pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod manifold;
pub mod solver;
pub mod transport;

pub use dataset::ClusteredDataset;
pub use error::{Error, Result};
pub use manifold::OrthogonalTransform;
pub use solver::{AlignmentMode, AlignmentResult, SolverConfig};
