//! Causal discovery for linear models with latent confounding and
//! non-Gaussian errors.
//!
//! The estimand is a bow-free acyclic path diagram (BAP): a mixed graph with
//! directed edges for direct effects and bidirected edges for confounded
//! pairs, where no pair carries both. Identification rests on higher-order
//! moments: after regression adjustment, a residual is uncorrelated with the
//! (K-1)-th power of an adjusted regressor exactly when the corresponding
//! edge constraints hold, which Gaussian errors cannot reveal but skewed or
//! kurtotic ones can.
//!
//! Crate layout:
//! - [`graph`]: mixed graphs, validation, scoring, random generation, I/O
//! - [`sem`]: linear structural equation models and non-Gaussian sampling
//! - [`moments`]: population-moment oracle and residual/effect algebra
//! - [`eltest`]: threshold and empirical-likelihood independence tests
//! - [`algo`]: the discovery loop over sample or oracle backends
//! - [`cli`]: the command line harness

pub mod algo;
pub mod cli;
pub mod eltest;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod moments;
pub mod sem;

pub use algo::{run_bang, Backend, BangOutcome, DiscoveryConfig};
pub use graph::MixedGraph;
pub use sem::{ErrorFamily, SemParameters};
