//! Supervised binning for logistic regression.
//!
//! Continuous variables are cut into a fine equal-frequency grid and
//! one-hot encoded. A logistic model is then fit under a penalty combining
//! within-variable total variation (adjacent bins with equal coefficients
//! merge) and a per-variable Euclidean norm (whole variables drop out).
//! The penalty weights are chosen by cross-validation along a
//! regularization path.

pub mod baselines;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod glm;
pub mod model;
pub mod objective;
pub mod par;
pub mod path;
pub mod prox;
pub mod solver;
pub mod synth;

pub use dataset::{encode, fit_grid, load_csv, BinGrid, Dataset, EncodedDesign};
pub use error::{Error, Result};
pub use model::{auc, extract, scorecard, BinningModel, ScorecardTable};
pub use objective::{nll, nll_gradient, penalty_value, predict_logit, Coefficients};
pub use path::{lambda2_max, trace, PathConfig, PathResult};
pub use prox::{prox_group, prox_penalty, prox_tv1d, PenaltyParams};
pub use solver::{fit, objective_at, FitResult, LogisticProblem, SolverConfig};
