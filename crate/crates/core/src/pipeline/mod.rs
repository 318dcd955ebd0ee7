//! End-to-end study orchestration: corpus preparation, feature assembly,
//! leave-one-subject-out cross-validation with in-fold hyperparameter
//! selection, and agreement reporting.

mod config;
mod cv;
mod features;
mod report;
mod study;

use thiserror::Error;

pub use config::{
    BasisConfig, CvConfig, ExecutionConfig, GridConfig, KernelConfig, ModelConfig, ModelKind,
    StudyConfig, TruthConfig,
};
pub use cv::{fit_model, fold_basis, leakage_check, loso_cv, select_hyperparams, Selection};
pub use features::assemble_features;
pub use report::{agreement_table, AgreementTable, CVReport, FoldRecord, PredictionRecord};
pub use study::{
    build_grid, corpus_descriptors, delta_sweep, descriptor_hash, inputs_for_grid, plant_truth,
    prepare_study, prepare_study_with, project_corpus, PreparedStudy, Projection, StudyInputs,
    SweepEntry,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error at `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Basis(#[from] crate::bases::BasisError),
    #[error(transparent)]
    Rkhs(#[from] crate::rkhs::RkhsError),
    #[error(transparent)]
    Ordreg(#[from] crate::ordreg::OrdregError),
    #[error(transparent)]
    Synth(#[from] crate::synthcorp::SynthError),
}

impl PipelineError {
    pub(crate) fn config(key: &str, msg: impl Into<String>) -> Self {
        PipelineError::Config {
            key: key.to_string(),
            msg: msg.into(),
        }
    }
}
