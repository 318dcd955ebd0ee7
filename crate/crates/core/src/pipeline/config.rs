use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::bases::BasisKind;
use crate::hashing::{derive_seed, hash_bytes};
use crate::ordreg::FitOptions;
use crate::synthcorp::CorpusConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fixed,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    /// Grid spacing Δ.
    pub gap: f64,
    /// Spacings for the robustness sweep.
    pub sweep: Vec<f64>,
    /// Projection ridge; the default is used when absent.
    pub ridge: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            lo: [-0.8, -0.8, -2.0],
            hi: [0.8, 0.8, 2.0],
            gap: 0.4,
            sweep: vec![0.5, 0.4, 0.32],
            ridge: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub lambda: f64,
    /// Candidate bandwidths; when non-empty, λ is selected inside each fold.
    pub lambda_grid: Vec<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            lambda_grid: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub kinds: Vec<BasisKind>,
    pub r_kernel: usize,
    pub r_covariance: usize,
    pub r_mixed: usize,
    /// Candidate truncations; when non-empty, r is selected inside each fold.
    pub r_grid: Vec<usize>,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            kinds: BasisKind::ALL.to_vec(),
            r_kernel: BasisKind::Kernel.default_r(),
            r_covariance: BasisKind::Covariance.default_r(),
            r_mixed: BasisKind::Mixed.default_r(),
            r_grid: Vec::new(),
        }
    }
}

impl BasisConfig {
    pub fn r_for(&self, kind: BasisKind) -> usize {
        match kind {
            BasisKind::Kernel => self.r_kernel,
            BasisKind::Covariance => self.r_covariance,
            BasisKind::Mixed => self.r_mixed,
        }
    }

    pub fn r_candidates(&self, kind: BasisKind) -> Vec<usize> {
        if self.r_grid.is_empty() {
            vec![self.r_for(kind)]
        } else {
            self.r_grid.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub nq: usize,
    pub max_iter: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Mixed,
            nq: 15,
            max_iter: 200,
        }
    }
}

impl ModelConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            nq: self.nq,
            max_iter: self.max_iter,
            ..FitOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    /// Fold count of the inner κ-fold selection.
    pub kappa: usize,
    /// Inner selection uses leave-one-subject-out up to this many training
    /// subjects and κ-fold beyond.
    pub inner_loso_max_subjects: usize,
    pub check_leakage: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            kappa: 5,
            inner_loso_max_subjects: 30,
            check_leakage: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthConfig {
    pub thresholds: Vec<f64>,
    /// Coefficients of `[shirt.size, sex, age]`.
    pub beta: Vec<f64>,
    /// Signal weight per leading basis component (per standard deviation).
    pub weights: Vec<f64>,
    pub basis: BasisKind,
    /// Bandwidth of the basis carrying the signal (defaults to `kernel.lambda`).
    pub lambda: Option<f64>,
    pub sd: f64,
    /// Response noise seed (derived from the corpus master seed when absent).
    pub noise_seed: Option<u64>,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![-1.6, 1.6],
            beta: vec![-2.0, 0.0, 2.0],
            weights: vec![1.0, 0.8, 0.6, 0.5, 0.4],
            basis: BasisKind::Kernel,
            lambda: None,
            sd: 0.5,
            noise_seed: None,
        }
    }
}

/// Worker bound; does not influence any result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutionConfig {
    /// 0 means all available cores.
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub corpus: CorpusConfig,
    pub grid: GridConfig,
    pub kernel: KernelConfig,
    pub basis: BasisConfig,
    pub model: ModelConfig,
    pub cv: CvConfig,
    pub truth: TruthConfig,
    #[serde(skip_serializing)]
    pub execution: ExecutionConfig,
}

/// Dotted `section.key` at the span of a TOML error, as far as it can be
/// recovered from the source text.
fn error_key(text: &str, e: &toml::de::Error) -> String {
    let Some(span) = e.span() else {
        return String::new();
    };
    let start = span.start.min(text.len());
    let line_start = text[..start].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next().unwrap_or("");
    let key = line
        .split('=')
        .next()
        .unwrap_or("")
        .trim()
        .trim_matches(['[', ']'])
        .to_string();
    if line.trim_start().starts_with('[') {
        return key;
    }
    let section = text[..line_start].lines().rev().find_map(|l| {
        let l = l.trim();
        (l.starts_with('[') && l.ends_with(']'))
            .then(|| l.trim_matches(['[', ']']).trim().to_string())
    });
    match section {
        Some(s) if !key.is_empty() => format!("{s}.{key}"),
        Some(s) => s,
        None => key,
    }
}

fn positive(key: &str, v: f64) -> Result<(), PipelineError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(PipelineError::config(
            key,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: StudyConfig = toml::from_str(text)
            .map_err(|e| PipelineError::config(&error_key(text, &e), e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Canonical JSON of the result-relevant settings (execution excluded).
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hash_bytes(self.echo().to_string().as_bytes())
    }

    pub fn lambda_candidates(&self) -> Vec<f64> {
        if self.kernel.lambda_grid.is_empty() {
            vec![self.kernel.lambda]
        } else {
            self.kernel.lambda_grid.clone()
        }
    }

    pub fn truth_lambda(&self) -> f64 {
        self.truth.lambda.unwrap_or(self.kernel.lambda)
    }

    pub fn noise_seed(&self) -> u64 {
        self.truth
            .noise_seed
            .unwrap_or_else(|| derive_seed(self.corpus.master_seed, "truth", 0))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.corpus
            .validate()
            .map_err(|e| PipelineError::config("corpus", e.to_string()))?;
        positive("grid.gap", self.grid.gap)?;
        for (i, g) in self.grid.sweep.iter().enumerate() {
            positive(&format!("grid.sweep[{i}]"), *g)?;
        }
        for axis in 0..3 {
            if !(self.grid.hi[axis] > self.grid.lo[axis]) {
                return Err(PipelineError::config(
                    "grid.hi",
                    format!("axis {axis} must exceed grid.lo"),
                ));
            }
        }
        if let Some(r) = self.grid.ridge {
            if !(r >= 0.0) {
                return Err(PipelineError::config("grid.ridge", "must be non-negative"));
            }
        }
        positive("kernel.lambda", self.kernel.lambda)?;
        for (i, l) in self.kernel.lambda_grid.iter().enumerate() {
            positive(&format!("kernel.lambda_grid[{i}]"), *l)?;
        }
        if self.basis.kinds.is_empty() {
            return Err(PipelineError::config(
                "basis.kinds",
                "at least one basis kind is required",
            ));
        }
        for (key, r) in [
            ("basis.r_kernel", self.basis.r_kernel),
            ("basis.r_covariance", self.basis.r_covariance),
            ("basis.r_mixed", self.basis.r_mixed),
        ] {
            if r == 0 {
                return Err(PipelineError::config(key, "must be at least 1"));
            }
        }
        if self.basis.r_grid.contains(&0) {
            return Err(PipelineError::config(
                "basis.r_grid",
                "entries must be at least 1",
            ));
        }
        if self.model.nq == 0 {
            return Err(PipelineError::config("model.nq", "must be at least 1"));
        }
        if self.model.max_iter == 0 {
            return Err(PipelineError::config(
                "model.max_iter",
                "must be at least 1",
            ));
        }
        if self.cv.kappa < 2 {
            return Err(PipelineError::config("cv.kappa", "must be at least 2"));
        }
        if self.truth.thresholds.len() != 2 || self.truth.thresholds[0] >= self.truth.thresholds[1]
        {
            return Err(PipelineError::config(
                "truth.thresholds",
                "need 2 increasing values",
            ));
        }
        if self.truth.beta.len() != 3 {
            return Err(PipelineError::config(
                "truth.beta",
                "need 3 values (shirt.size, sex, age)",
            ));
        }
        if self.truth.weights.is_empty() {
            return Err(PipelineError::config(
                "truth.weights",
                "at least one weight is required",
            ));
        }
        if !(self.truth.sd >= 0.0) {
            return Err(PipelineError::config("truth.sd", "must be non-negative"));
        }
        if let Some(l) = self.truth.lambda {
            positive("truth.lambda", l)?;
        }
        Ok(())
    }
}
