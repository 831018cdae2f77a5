//! Cause/effect decisions from kernel-estimated quantile partial effects, and causal ordering
//! by Fisher information of kernel-estimated scores.
//!
//! The estimators are generic over [`Real`] (`f32` or `f64`); the `*64` aliases below name the
//! double precision instances used by the command-line tool.

pub mod basistest;
pub mod datasets;
mod error;
pub mod fico;
pub mod kqpe;
pub mod linalg;
pub mod metrics;
pub mod oracle;
mod scalar;
pub mod score;
pub mod selftest;

pub use basistest::{
    decide_direction, evaluate_corpus, ols_residual, BasisFn, BasisSpec, CorpusReport, DirectionDecision,
    DirectionOptions,
};
pub use datasets::{Dag, Effect, SampleMatrix};
pub use error::{Error, Result};
pub use fico::{fico_batch, fico_order, CausalOrder, FicoOptions, FicoResult};
pub use kqpe::{cdf_hat, qpe_grid, CdfEval, KernelConfig, QpeGrid, TestDesign};
pub use metrics::{audrc, order_divergence, pair_accuracy, OrderScore};
pub use scalar::Real;
pub use score::{fisher_info, stein_score, verify_fi_identity, FisherInfo, ScoreField, SteinOptions};

pub type Samples64 = SampleMatrix<f64>;
pub type KernelConfig64 = KernelConfig<f64>;
pub type QpeGrid64 = QpeGrid<f64>;
pub type Decision64 = DirectionDecision<f64>;
pub type ScoreField64 = ScoreField<f64>;
pub type FisherInfo64 = FisherInfo<f64>;
