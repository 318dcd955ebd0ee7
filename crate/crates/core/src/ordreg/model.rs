use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::cell::logistic;
use super::OrdregError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Gradient ∞-norm at which the fixed-effects Newton iteration stops.
    pub grad_tol: f64,
    /// Gradient ∞-norm at which the mixed-model quasi-Newton iteration stops.
    pub mixed_grad_tol: f64,
    /// Gauss–Hermite nodes per subject (1 = Laplace).
    pub nq: usize,
    /// Largest |cut point + linear predictor| tolerated before the fit is
    /// declared separated.
    pub separation_cap: f64,
    /// Starting random-intercept SD for the mixed fit.
    pub initial_sd: f64,
    /// σ_u below this is treated as the boundary σ_u = 0.
    pub min_sd: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-8,
            mixed_grad_tol: 1e-6,
            nq: 15,
            separation_cap: 40.0,
            initial_sd: 0.5,
            min_sd: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitInfo {
    pub method: String,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub se_thresholds: Vec<f64>,
    pub se_scalar: Vec<f64>,
    pub se_functional: Vec<f64>,
    pub se_sd: Option<f64>,
    pub nq: Option<usize>,
    pub warnings: Vec<String>,
    /// Log-likelihood at every ascent-accepted iterate (not serialized).
    #[serde(skip)]
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalModel {
    pub labels: Vec<i64>,
    pub covariate_names: Vec<String>,
    pub thresholds: Vec<f64>,
    pub scalar_coefs: Vec<f64>,
    pub functional_coefs: Vec<f64>,
    pub random_intercept_sd: Option<f64>,
    #[serde(with = "matrix_rows")]
    pub hk_gram: DMatrix<f64>,
    pub fit_info: FitInfo,
}

mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        serde::Serialize::serialize(&rows, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(D::Error::custom("ragged matrix"));
        }
        Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }
}

impl OrdinalModel {
    pub fn j(&self) -> usize {
        self.labels.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, OrdregError> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), OrdregError> {
        if self.thresholds.len() + 1 != self.labels.len() {
            return Err(OrdregError::Dimension(format!(
                "{} thresholds for {} categories",
                self.thresholds.len(),
                self.labels.len()
            )));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(OrdregError::InvalidParameter(
                "thresholds must increase".into(),
            ));
        }
        let r = self.functional_coefs.len();
        if self.hk_gram.shape() != (r, r) {
            return Err(OrdregError::Dimension(format!(
                "Gram is {:?} for {r} functional coefficients",
                self.hk_gram.shape()
            )));
        }
        if let Some(sd) = self.random_intercept_sd {
            if !(sd >= 0.0) {
                return Err(OrdregError::InvalidParameter(format!("σ_u = {sd}")));
            }
        }
        Ok(())
    }
}

/// `β·x + bᵀ G z`, accumulated as the explicit double sum.
pub fn linear_predictor(
    model: &OrdinalModel,
    covariates: &[f64],
    z: &[f64],
) -> Result<f64, OrdregError> {
    if covariates.len() != model.scalar_coefs.len() {
        return Err(OrdregError::Dimension(format!(
            "{} covariates for {} coefficients",
            covariates.len(),
            model.scalar_coefs.len()
        )));
    }
    if z.len() != model.functional_coefs.len() {
        return Err(OrdregError::Dimension(format!(
            "feature vector of length {} for {} functional coefficients",
            z.len(),
            model.functional_coefs.len()
        )));
    }
    let mut eta = 0.0;
    for (b, x) in model.scalar_coefs.iter().zip(covariates) {
        eta += b * x;
    }
    eta += gram_form(&model.functional_coefs, &model.hk_gram, z);
    Ok(eta)
}

/// `Σ_p b_p Σ_l G[p,l] z_l`.
pub(crate) fn gram_form(b: &[f64], g: &DMatrix<f64>, z: &[f64]) -> f64 {
    let mut s = 0.0;
    for (p, bp) in b.iter().enumerate() {
        s += bp * gram_row(g, p, z);
    }
    s
}

/// `Σ_l G[p,l] z_l`.
pub(crate) fn gram_row(g: &DMatrix<f64>, p: usize, z: &[f64]) -> f64 {
    let mut s = 0.0;
    for (l, zl) in z.iter().enumerate() {
        s += g[(p, l)] * zl;
    }
    s
}

/// Category probabilities with `P(Y ≤ j) = logistic(α_j + η + u)`.
pub fn predict_probs(
    model: &OrdinalModel,
    covariates: &[f64],
    z: &[f64],
    random_effect: f64,
) -> Result<Vec<f64>, OrdregError> {
    let eta = linear_predictor(model, covariates, z)? + random_effect;
    Ok(probs_from_eta(&model.thresholds, eta))
}

pub(crate) fn probs_from_eta(thresholds: &[f64], eta: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(thresholds.len() + 1);
    let mut prev = 0.0;
    for a in thresholds {
        let c = logistic(a + eta).max(prev);
        out.push(c - prev);
        prev = c;
    }
    out.push(1.0 - prev);
    out
}

/// Modal category index (lowest on ties).
pub fn predict_category(
    model: &OrdinalModel,
    covariates: &[f64],
    z: &[f64],
    random_effect: f64,
) -> Result<usize, OrdregError> {
    let p = predict_probs(model, covariates, z, random_effect)?;
    let mut best = 0;
    for (j, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = j;
        }
    }
    Ok(best)
}
