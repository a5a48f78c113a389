//! Search engine for labeled-DAG micro-networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`archspace`] defines architectures, validity, sampling, neighbourhoods,
//!   the fixed-length feature encoding and the exact search-space bound.
//! * [`netbuild`] implements the node-output width ruleset, parameter counting
//!   and a shape-checked forward pass.
//! * [`surrogate`] trains F1 predictors from performance records.
//! * [`reward`] scalarises predicted F1 and parameter count into a utility.
//! * [`search`] runs the baseline strategies under a shared query budget and
//!   maintains Pareto fronts.
//! * [`qlearn`] is the prioritized-replay, double/dueling Q-learning searcher.
//! * [`oracle`] is a synthetic ground-truth generator for end-to-end runs.
//!
//! Batch workloads go through [`exec`], which uses rayon when the `parallel`
//! feature is enabled and falls back to plain iteration otherwise.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archspace;
pub mod error;
pub mod exec;
pub mod netbuild;
pub mod nn;
pub mod oracle;
pub mod qlearn;
pub mod reward;
pub mod rng;
pub mod search;
pub mod surrogate;

pub use archspace::{Architecture, EncodedFeatures, OpLabel, SpaceLimits};
pub use error::{Error, Result};
pub use exec::Execution;
