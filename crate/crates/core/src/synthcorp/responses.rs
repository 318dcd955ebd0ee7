use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, COVARIATE_NAMES};
use super::SynthError;
use crate::hashing::derive_seed;
use crate::ordreg::{
    gauss_hermite, predict_probs, FitInfo, Observation, OrdinalDataset, OrdinalModel,
    DEFAULT_LABELS,
};

/// Ground-truth cumulative-logit model used to draw responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFitModel {
    pub thresholds: Vec<f64>,
    /// Coefficients of `[shirt.size, sex, age]`.
    pub beta: Vec<f64>,
    /// Functional slope in the coefficients of the studied basis.
    pub b_star: Vec<f64>,
    pub sd: f64,
    pub noise_seed: u64,
}

impl LatentFitModel {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.thresholds.len() != DEFAULT_LABELS.len() - 1
            || self.thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(SynthError::InvalidParams(
                "thresholds must be 2 increasing values".into(),
            ));
        }
        if self.beta.len() != COVARIATE_NAMES.len() {
            return Err(SynthError::InvalidParams(format!(
                "beta needs {} entries",
                COVARIATE_NAMES.len()
            )));
        }
        if !(self.sd >= 0.0) {
            return Err(SynthError::InvalidParams(format!("σ_u = {}", self.sd)));
        }
        Ok(())
    }

    /// The generator as an [`OrdinalModel`], so sampling and prediction share
    /// one probability formula.
    pub fn as_model(&self, gram: &DMatrix<f64>) -> OrdinalModel {
        OrdinalModel {
            labels: DEFAULT_LABELS.to_vec(),
            covariate_names: COVARIATE_NAMES.iter().map(|s| s.to_string()).collect(),
            thresholds: self.thresholds.clone(),
            scalar_coefs: self.beta.clone(),
            functional_coefs: self.b_star.clone(),
            random_intercept_sd: Some(self.sd),
            hk_gram: gram.clone(),
            fit_info: FitInfo {
                method: "truth".into(),
                converged: true,
                ..FitInfo::default()
            },
        }
    }
}

/// Planted functional signal and the matching shifts of the scalar part.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSignal {
    pub b_star: Vec<f64>,
    /// Added to every threshold.
    pub threshold_shift: f64,
    /// Added to the coefficient of each subject-level covariate.
    pub covariate_shift: Vec<f64>,
}

/// Functional slope with the given per-component weights, planted in the
/// part of each component of `G z` that the subject-level covariates do not
/// explain.
///
/// Each `(G z)_l` is regressed on `[1, covariates]` across subjects; with
/// residual `e_l` of standard deviation `s_l`, `b_l = w_l / s_l`. The shifts
/// cancel the explained part, so the linear predictor of a subject is
/// `β·x + Σ_l b_l e_l`: each weighted component carries `w_l` per residual
/// standard deviation of information the covariates cannot absorb.
/// Components beyond `weights.len()` are zero.
pub fn plant_signal(
    weights: &[f64],
    features: &[Vec<f64>],
    subject_covariates: &[Vec<f64>],
    gram: &DMatrix<f64>,
) -> PlantedSignal {
    let r = gram.nrows();
    let n = features.len();
    let k = subject_covariates.first().map_or(0, |c| c.len());
    let mut design = DMatrix::from_element(n, k + 1, 1.0);
    for (i, c) in subject_covariates.iter().enumerate() {
        for (j, v) in c.iter().enumerate() {
            design[(i, j + 1)] = *v;
        }
    }
    let svd = design.clone().svd(true, true);
    let mut out = PlantedSignal {
        b_star: vec![0.0; r],
        threshold_shift: 0.0,
        covariate_shift: vec![0.0; k],
    };
    if n < k + 2 {
        return out;
    }
    for l in 0..r {
        let w = weights.get(l).copied().unwrap_or(0.0);
        if w == 0.0 {
            continue;
        }
        let t = DVector::from_iterator(
            n,
            features
                .iter()
                .map(|z| (gram.row(l) * DVector::from_column_slice(z))[0]),
        );
        let coef = svd.solve(&t, 1e-12).expect("SVD has both factors");
        let resid = &t - &design * &coef;
        let var = resid.norm_squared() / (n - 1) as f64;
        if !(var > 0.0) {
            continue;
        }
        let b = w / var.sqrt();
        out.b_star[l] = b;
        out.threshold_shift -= b * coef[0];
        for j in 0..k {
            out.covariate_shift[j] -= b * coef[j + 1];
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SyntheticResponses {
    pub dataset: OrdinalDataset,
    /// Drawn random intercept per subject.
    pub effects: BTreeMap<String, f64>,
    pub truth: OrdinalModel,
}

/// Draw one response per (subject, size): `u_k ~ N(0, σ*²)` once per
/// subject, then a category from the cumulative-logit probabilities.
pub fn generate_responses(
    corpus: &Corpus,
    features: &BTreeMap<String, Vec<f64>>,
    gram: &DMatrix<f64>,
    model: &LatentFitModel,
) -> Result<SyntheticResponses, SynthError> {
    model.validate()?;
    let r = gram.nrows();
    if model.b_star.len() != r || gram.ncols() != r {
        return Err(SynthError::InvalidParams(format!(
            "b* has {} entries for a {}×{} Gram",
            model.b_star.len(),
            gram.nrows(),
            gram.ncols()
        )));
    }
    let truth = model.as_model(gram);
    let mut rows = Vec::new();
    let mut effects = BTreeMap::new();
    for (k, s) in corpus.subjects.iter().enumerate() {
        let z = features
            .get(&s.id)
            .ok_or_else(|| SynthError::MissingFeatures(s.id.clone()))?;
        if z.len() != r {
            return Err(SynthError::InvalidParams(format!(
                "subject `{}` has {} features, expected {r}",
                s.id,
                z.len()
            )));
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(model.noise_seed, "responses", k as u64));
        let normal: f64 = StandardNormal.sample(&mut rng);
        let u = model.sd * normal;
        effects.insert(s.id.clone(), u);
        for x in s.covariate_rows() {
            let p = predict_probs(&truth, &x, z, u)?;
            let v: f64 = rng.random();
            let mut acc = 0.0;
            let mut y = p.len() - 1;
            for (j, pj) in p.iter().enumerate() {
                acc += pj;
                if v < acc {
                    y = j;
                    break;
                }
            }
            rows.push(Observation {
                subject: s.id.clone(),
                response: y,
                covariates: x,
                z: z.clone(),
            });
        }
    }
    let dataset = OrdinalDataset::new(
        DEFAULT_LABELS.to_vec(),
        COVARIATE_NAMES.iter().map(|s| s.to_string()).collect(),
        r,
        rows,
    )?;
    Ok(SyntheticResponses {
        dataset,
        effects,
        truth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    /// Percentage of observed responses equal to the Bayes-rule prediction.
    pub realized: f64,
    /// Expected percentage under the generator (mean of the modal
    /// marginal probability).
    pub expected: f64,
}

/// Bayes rule under the true model for a new subject: the modal category of
/// the marginal probabilities `∫ P(Y | η + u) φ(u; 0, σ*²) du`.
pub fn oracle_agreement(responses: &SyntheticResponses) -> Result<OracleSummary, SynthError> {
    let truth = &responses.truth;
    let sd = truth.random_intercept_sd.unwrap_or(0.0);
    let (nodes, weights) = gauss_hermite(40);
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut hits = 0usize;
    let mut expected = 0.0;
    let data = &responses.dataset;
    for row in data.rows() {
        let mut marginal = vec![0.0; data.j()];
        for (x, w) in nodes.iter().zip(&weights) {
            let u = std::f64::consts::SQRT_2 * sd * x;
            let p = predict_probs(truth, &row.covariates, &row.z, u)?;
            for (m, pj) in marginal.iter_mut().zip(p) {
                *m += w / sqrt_pi * pj;
            }
        }
        let mut best = 0;
        for j in 1..marginal.len() {
            if marginal[j] > marginal[best] {
                best = j;
            }
        }
        if best == row.response {
            hits += 1;
        }
        expected += marginal[best];
    }
    let n = data.len().max(1) as f64;
    Ok(OracleSummary {
        realized: 100.0 * hits as f64 / n,
        expected: 100.0 * expected / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthcorp::{generate_corpus, CorpusConfig};

    fn flat_features(corpus: &Corpus, r: usize) -> BTreeMap<String, Vec<f64>> {
        corpus
            .subjects
            .iter()
            .map(|s| (s.id.clone(), vec![0.0; r]))
            .collect()
    }

    #[test]
    fn uniform_trinomial_without_signal() {
        let corpus = generate_corpus(&CorpusConfig {
            subjects: 1500,
            ..CorpusConfig::default()
        })
        .unwrap();
        let model = LatentFitModel {
            thresholds: vec![-2f64.ln(), 2f64.ln()],
            beta: vec![0.0; 3],
            b_star: vec![0.0; 2],
            sd: 0.0,
            noise_seed: 3,
        };
        let g = DMatrix::identity(2, 2);
        let out = generate_responses(&corpus, &flat_features(&corpus, 2), &g, &model).unwrap();
        let n = out.dataset.len() as f64;
        assert!(n >= 3000.0);
        for c in out.dataset.category_counts() {
            let p = c as f64 / n;
            let se = (1.0 / 3.0 * 2.0 / 3.0 / n).sqrt();
            assert!((p - 1.0 / 3.0).abs() < 4.0 * se, "frequency {p}");
        }
    }

    #[test]
    fn extreme_size_effect_gives_monotone_responses() {
        let corpus = generate_corpus(&CorpusConfig {
            subjects: 40,
            ..CorpusConfig::default()
        })
        .unwrap();
        let model = LatentFitModel {
            thresholds: vec![-1.0, 1.0],
            beta: vec![-60.0, 0.0, 60.0 / 1.0],
            b_star: vec![0.0],
            sd: 0.5,
            noise_seed: 9,
        };
        let g = DMatrix::identity(1, 1);
        let out = generate_responses(&corpus, &flat_features(&corpus, 1), &g, &model).unwrap();
        for (_, range) in out.dataset.subject_ranges() {
            let ys: Vec<usize> = out.dataset.rows()[range]
                .iter()
                .map(|r| r.response)
                .collect();
            assert!(ys.windows(2).all(|w| w[0] <= w[1]), "{ys:?}");
        }
    }

    #[test]
    fn planted_predictor_is_the_covariate_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let covs: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i % 2) as f64, 3.0 + 0.3 * i as f64])
            .collect();
        let feats: Vec<Vec<f64>> = covs
            .iter()
            .map(|c| {
                (0..3)
                    .map(|l| (l as f64 + 1.0) * c[1] + rng.random::<f64>())
                    .collect()
            })
            .collect();
        let gram = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.2 });
        let p = plant_signal(&[1.0, 0.5], &feats, &covs, &gram);
        assert_eq!(p.b_star[2], 0.0);
        let signal: Vec<f64> = feats
            .iter()
            .zip(&covs)
            .map(|(z, c)| {
                let gz = &gram * DVector::from_column_slice(z);
                p.b_star
                    .iter()
                    .zip(gz.iter())
                    .map(|(b, v)| b * v)
                    .sum::<f64>()
                    + p.threshold_shift
                    + p.covariate_shift[0] * c[0]
                    + p.covariate_shift[1] * c[1]
            })
            .collect();
        // orthogonal to the covariates and centered
        let mean = signal.iter().sum::<f64>() / 30.0;
        assert!(mean.abs() < 1e-9);
        let dot: f64 = signal.iter().zip(&covs).map(|(s, c)| s * c[1]).sum();
        assert!(dot.abs() < 1e-8, "{dot}");
    }

    #[test]
    fn oracle_is_reproducible_and_above_chance() {
        let corpus = generate_corpus(&CorpusConfig::default()).unwrap();
        let model = LatentFitModel {
            thresholds: vec![-1.5, 1.5],
            beta: vec![-2.0, 0.0, 2.0],
            b_star: vec![0.0],
            sd: 0.5,
            noise_seed: 1,
        };
        let g = DMatrix::identity(1, 1);
        let feats = flat_features(&corpus, 1);
        let a =
            oracle_agreement(&generate_responses(&corpus, &feats, &g, &model).unwrap()).unwrap();
        let b =
            oracle_agreement(&generate_responses(&corpus, &feats, &g, &model).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.expected > 50.0);
    }
}
