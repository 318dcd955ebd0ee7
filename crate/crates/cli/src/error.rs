use curreg_core::bases::BasisError;
use curreg_core::ordreg::OrdregError;
use curreg_core::pipeline::PipelineError;
use curreg_core::rkhs::RkhsError;
use curreg_core::synthcorp::SynthError;
use thiserror::Error;

/// CLI failure, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

fn from_rkhs(e: RkhsError) -> CliError {
    match e {
        RkhsError::Singular { .. } | RkhsError::NonFinite(_) => CliError::Numerical(e.to_string()),
        RkhsError::InvalidBandwidth(_) => CliError::config("kernel.lambda", e.to_string()),
        RkhsError::NegativeRidge(_) => CliError::config("grid.ridge", e.to_string()),
        RkhsError::Grid(_) => CliError::config("grid", e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

fn from_basis(e: BasisError) -> CliError {
    match e {
        BasisError::TruncationTooLarge { .. } | BasisError::ZeroTruncation => {
            CliError::config("basis.r", e.to_string())
        }
        BasisError::UnknownKind(_) => CliError::config("basis.kinds", e.to_string()),
        BasisError::KernelRankDeficient { .. } => CliError::Numerical(e.to_string()),
        BasisError::Rkhs(inner) => from_rkhs(inner),
        _ => CliError::Data(e.to_string()),
    }
}

fn from_ordreg(e: OrdregError) -> CliError {
    match e {
        OrdregError::NonConvergence { .. } | OrdregError::Separation { .. } => {
            CliError::Numerical(e.to_string())
        }
        _ => CliError::Data(e.to_string()),
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config { key, msg } => CliError::Config { key, msg },
            PipelineError::Data(m) => CliError::Data(m),
            PipelineError::Numerical(m) => CliError::Numerical(m),
            PipelineError::Basis(b) => from_basis(b),
            PipelineError::Rkhs(r) => from_rkhs(r),
            PipelineError::Ordreg(o) => from_ordreg(o),
            PipelineError::Synth(SynthError::InvalidParams(m)) => CliError::config("corpus", m),
            PipelineError::Synth(s) => CliError::Data(s.to_string()),
        }
    }
}

impl From<BasisError> for CliError {
    fn from(e: BasisError) -> Self {
        from_basis(e)
    }
}

impl From<RkhsError> for CliError {
    fn from(e: RkhsError) -> Self {
        from_rkhs(e)
    }
}

impl From<OrdregError> for CliError {
    fn from(e: OrdregError) -> Self {
        from_ordreg(e)
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        PipelineError::from(e).into()
    }
}
