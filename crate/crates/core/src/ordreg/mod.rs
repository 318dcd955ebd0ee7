//! Cumulative-logit (proportional-odds) ordinal regression with scalar
//! covariates, functional-coefficient features and an optional Gaussian
//! random intercept per subject.
//!
//! The model is `logit P(Y ≤ j) = α_j + β·x + bᵀ G z + u`, where `z` holds
//! basis coefficients of the subject's current and `G` is the H_K Gram of the
//! basis. Fitting works on the transformed features `G z`, so the fitted
//! functional coefficients are `b` directly.

mod cell;
mod dataset;
mod fixed;
mod mixed;
mod model;
mod quadrature;

use thiserror::Error;

pub use dataset::{Observation, OrdinalDataset, DEFAULT_LABELS};
pub use fixed::{fit_fixed, fixed_loglik, fixed_loglik_gradient};
pub use mixed::{fit_mixed, marginal_loglik, marginal_loglik_gradient};
pub use model::{
    linear_predictor, predict_category, predict_probs, FitInfo, FitOptions, OrdinalModel,
};
pub use quadrature::gauss_hermite;

#[derive(Debug, Error)]
pub enum OrdregError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("response label {0} is not one of the ordered categories")]
    UnknownLabel(i64),
    #[error("category {0} is never observed; its threshold is unidentified")]
    UnidentifiedThreshold(i64),
    #[error("at least two ordered categories are required")]
    TooFewCategories,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("complete separation detected: the likelihood is unbounded (coefficients reported at the cap)")]
    Separation { model: Box<OrdinalModel> },
    #[error(
        "optimizer did not converge after {iterations} iterations (gradient norm {grad_norm:e})"
    )]
    NonConvergence { iterations: usize, grad_norm: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dataset table: {0}")]
    Table(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
