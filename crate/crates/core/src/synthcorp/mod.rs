//! Synthetic population of closed body-like meshes with subject covariates
//! and ordinal fit responses drawn from a known cumulative-logit model.
//!
//! Every random draw comes from a per-subject stream derived from the master
//! seed with [`crate::hashing::derive_seed`], so a corpus is reproducible from
//! `(master seed, config)` alone and subjects can be generated in any order.

mod body;
mod corpus;
mod responses;

use thiserror::Error;

pub use body::{generate_body, icosphere, BodyParams};
pub use corpus::{generate_corpus, Corpus, CorpusConfig, SubjectRecord, COVARIATE_NAMES};
pub use responses::{
    generate_responses, oracle_agreement, plant_signal, LatentFitModel, OracleSummary,
    PlantedSignal, SyntheticResponses,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("no feature vector for subject `{0}`")]
    MissingFeatures(String),
    #[error(transparent)]
    Ordreg(#[from] crate::ordreg::OrdregError),
    #[error(transparent)]
    Mesh(#[from] crate::geometry::MeshError),
}
