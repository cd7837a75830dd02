//! Benchmark distillation toolkit: item response theory, information-based
//! item selection, penalized-spline score reconstruction, factor analysis,
//! and adaptive testing over binary response matrices.
//!
//! All numeric routines are generic over the floating-point type via
//! [`Scalar`]; `f64`-concrete aliases for the main fitted artifacts are
//! exported at the crate root.

pub mod cat;
pub mod data;
pub mod error;
pub mod fa;
pub mod irt;
pub mod linalg;
pub mod optim;
pub mod persist;
pub mod quad;
pub mod reconstruct;
pub mod scalar;
pub mod seeding;
pub mod select;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default-precision aliases for the commonly persisted artifacts.
pub type IrtModel = irt::FittedIrtModel<f64>;
pub type Abilities = irt::AbilityEstimates<f64>;
pub type Scores = data::ScoreVector<f64>;
pub type Gam = reconstruct::GamFit<f64>;
pub type WeightedAverage = reconstruct::WeightedAverageModel<f64>;
pub type ScoreLinkBaseline = reconstruct::LogisticBaseline<f64>;
pub type FactorModel = fa::FactorFit<f64>;
pub type Subset = select::SubsetResult<f64>;
