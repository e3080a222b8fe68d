//! Regularized learning with vector-valued linear predictors.
//!
//! A model is a `d x c` matrix `W`; component `j` scores an input `x` as
//! `<w_j, x>`. Training minimizes
//!
//! ```text
//! F_S(W) = (1/n) sum_i loss(W; z_i) + r(W)
//! ```
//!
//! with stochastic subgradient descent, for multi-class losses (multi-class
//! SVM, multinomial logistic, top-k SVM) and multi-label losses (subset,
//! ranking) under strongly convex regularizers. The crate also estimates
//! Rademacher complexities of the induced linear classes and runs the
//! error-curve experiments that expose how generalization scales with the
//! number of passes and the sample size.

pub mod container;
pub mod dataio;
pub mod error;
pub mod experiments;
pub mod losses;
pub mod model;
pub mod optimizer;
pub mod rademacher;
pub mod regularizers;
pub mod rng;
pub mod stats;
pub mod suites;

pub use error::{Error, Result};
pub use model::{Label, LabeledExample, Prediction, SparseVector, Task, WeightMatrix};
