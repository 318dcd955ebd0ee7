use std::collections::BTreeMap;
use std::sync::Arc;

use super::config::StudyConfig;
use super::cv::loso_cv;
use super::features::strip_features;
use super::PipelineError;
use crate::bases::{
    covariance_basis, kernel_basis, mixed_basis, BasisKind, BasisSet, KernelSpectrum,
};
use crate::exec::Execution;
use crate::geometry::{triangle_descriptors, DescriptorSet};
use crate::hashing::ContentHasher;
use crate::ordreg::OrdinalDataset;
use crate::rkhs::{CurrentRepr, Grid, GridKernel, KernelSpec, RawCurrent};
use crate::synthcorp::{
    generate_body, generate_corpus, generate_responses, oracle_agreement, plant_signal, Corpus,
    LatentFitModel, OracleSummary, SyntheticResponses,
};

pub fn build_grid(config: &StudyConfig, gap: f64) -> Result<Arc<Grid>, PipelineError> {
    Grid::build(config.grid.lo, config.grid.hi, gap)
        .map(Arc::new)
        .map_err(|e| PipelineError::config("grid", e.to_string()))
}

/// Triangle descriptors of every corpus body, labelled by subject id.
pub fn corpus_descriptors(
    corpus: &Corpus,
    exec: Execution,
) -> Result<Vec<DescriptorSet>, PipelineError> {
    exec.map(&corpus.subjects, |s| {
        let mesh = generate_body(&s.body)?;
        let mut set = triangle_descriptors(&mesh);
        set.label = s.id.clone();
        Ok(set)
    })
    .into_iter()
    .collect()
}

/// All subjects' currents on one grid at one bandwidth.
#[derive(Debug, Clone)]
pub struct Projection {
    pub lambda: f64,
    pub spectrum: Arc<KernelSpectrum>,
    pub reprs: BTreeMap<String, CurrentRepr>,
}

impl Projection {
    pub fn grid(&self) -> &Arc<Grid> {
        self.spectrum.grid()
    }

    /// Basis of the given kind over the currents of all subjects for which
    /// `include` holds (kernel bases ignore the sample).
    pub fn basis(
        &self,
        kind: BasisKind,
        r: usize,
        include: impl Fn(&str) -> bool,
    ) -> Result<BasisSet, PipelineError> {
        if kind == BasisKind::Kernel {
            return Ok(kernel_basis(&self.spectrum, r)?);
        }
        let sample: Vec<CurrentRepr> = self
            .reprs
            .iter()
            .filter(|(id, _)| include(id))
            .map(|(_, c)| c.clone())
            .collect();
        Ok(match kind {
            BasisKind::Covariance => covariance_basis(&sample, &self.spectrum, r)?,
            _ => mixed_basis(&sample, &self.spectrum, r)?,
        })
    }
}

/// Content hash of a descriptor set; stored as the `source` of its projection.
pub fn descriptor_hash(set: &DescriptorSet) -> String {
    let mut h = ContentHasher::new();
    h.str(&set.label).u64(set.descriptors.len() as u64);
    for d in &set.descriptors {
        for x in d.center.iter().chain(d.area_vector.iter()) {
            h.f64(*x);
        }
    }
    h.finish_hex()
}

pub fn project_corpus(
    descriptors: &[DescriptorSet],
    grid: Arc<Grid>,
    lambda: f64,
    ridge: Option<f64>,
    exec: Execution,
) -> Result<Projection, PipelineError> {
    let kernel = KernelSpec::new(lambda)?;
    let gk = GridKernel::new(grid.clone(), kernel, ridge)?;
    let reprs: Vec<Result<CurrentRepr, PipelineError>> = exec.map(descriptors, |set| {
        let raw = RawCurrent::from_descriptors(set, kernel)?;
        let mut repr = gk.project(&raw)?;
        repr.source = Some(descriptor_hash(set));
        Ok(repr)
    });
    let mut map = BTreeMap::new();
    for r in reprs {
        let r = r?;
        map.insert(r.label.clone(), r);
    }
    Ok(Projection {
        lambda,
        spectrum: Arc::new(KernelSpectrum::new(grid, kernel)),
        reprs: map,
    })
}

/// Covariate table plus one projection per candidate bandwidth (an
/// infeasible bandwidth keeps its error message for the selection step).
#[derive(Debug, Clone)]
pub struct StudyInputs {
    pub table: OrdinalDataset,
    pub projections: Vec<(f64, Result<Projection, String>)>,
}

impl StudyInputs {
    pub fn projection(&self, lambda: f64) -> Option<&Projection> {
        self.projections
            .iter()
            .find(|(l, _)| l.to_bits() == lambda.to_bits())
            .and_then(|(_, p)| p.as_ref().ok())
    }
}

pub fn inputs_for_grid(
    config: &StudyConfig,
    descriptors: &[DescriptorSet],
    table: &OrdinalDataset,
    gap: f64,
    exec: Execution,
) -> Result<StudyInputs, PipelineError> {
    let grid = build_grid(config, gap)?;
    let projections = config
        .lambda_candidates()
        .into_iter()
        .map(|l| {
            let p = project_corpus(descriptors, grid.clone(), l, config.grid.ridge, exec)
                .map_err(|e| e.to_string());
            if let Err(e) = &p {
                log::warn!("bandwidth {l} is infeasible: {e}");
            }
            (l, p)
        })
        .collect();
    Ok(StudyInputs {
        table: table.clone(),
        projections,
    })
}

/// Draw responses from the configured ground truth, planting the functional
/// signal in the leading components of the truth basis built over the full
/// corpus.
pub fn plant_truth(
    config: &StudyConfig,
    corpus: &Corpus,
    projection: &Projection,
) -> Result<SyntheticResponses, PipelineError> {
    let t = &config.truth;
    let basis = projection.basis(t.basis, t.weights.len(), |_| true)?;
    let features: BTreeMap<String, Vec<f64>> = projection
        .reprs
        .iter()
        .map(|(id, c)| Ok((id.clone(), basis.coefficients(c)?.values)))
        .collect::<Result<_, PipelineError>>()?;
    let rows: Vec<Vec<f64>> = features.values().cloned().collect();
    // subject-level covariates (sex, age), in the same subject order
    let covs: Vec<Vec<f64>> = features
        .keys()
        .map(|id| {
            let s = corpus.subject(id).expect("projection covers the corpus");
            vec![s.sex as f64, s.age]
        })
        .collect();
    let planted = plant_signal(&t.weights, &rows, &covs, basis.hk_gram());
    let mut beta = t.beta.clone();
    beta[1] += planted.covariate_shift[0];
    beta[2] += planted.covariate_shift[1];
    let model = LatentFitModel {
        thresholds: t
            .thresholds
            .iter()
            .map(|a| a + planted.threshold_shift)
            .collect(),
        beta,
        b_star: planted.b_star,
        sd: t.sd,
        noise_seed: config.noise_seed(),
    };
    Ok(generate_responses(
        corpus,
        &features,
        basis.hk_gram(),
        &model,
    )?)
}

#[derive(Debug, Clone)]
pub struct PreparedStudy {
    pub corpus: Corpus,
    pub descriptors: Vec<DescriptorSet>,
    pub responses: SyntheticResponses,
    pub oracle: OracleSummary,
    pub inputs: StudyInputs,
}

/// Generate the corpus, project every body and draw the synthetic responses.
pub fn prepare_study(
    config: &StudyConfig,
    exec: Execution,
) -> Result<PreparedStudy, PipelineError> {
    let ridge = config.grid.ridge;
    prepare_study_with(config, exec, |d, g, l| project_corpus(d, g, l, ridge, exec))
}

/// As [`prepare_study`], with a caller-supplied projector `(descriptors,
/// grid, λ) -> Projection` (used to reuse cached representatives).
pub fn prepare_study_with<P>(
    config: &StudyConfig,
    exec: Execution,
    project: P,
) -> Result<PreparedStudy, PipelineError>
where
    P: Fn(&[DescriptorSet], Arc<Grid>, f64) -> Result<Projection, PipelineError>,
{
    config.validate()?;
    let corpus = generate_corpus(&config.corpus)?;
    let descriptors = corpus_descriptors(&corpus, exec)?;
    let grid = build_grid(config, config.grid.gap)?;
    let truth_lambda = config.truth_lambda();
    let mut projections: Vec<(f64, Result<Projection, String>)> = config
        .lambda_candidates()
        .into_iter()
        .map(|l| {
            let p = project(&descriptors, grid.clone(), l).map_err(|e| e.to_string());
            (l, p)
        })
        .collect();
    let truth_projection = match projections
        .iter()
        .find(|(l, _)| l.to_bits() == truth_lambda.to_bits())
    {
        Some((_, Ok(p))) => p.clone(),
        // recompute on failure to surface the typed error
        _ => project(&descriptors, grid, truth_lambda)?,
    };
    let responses = plant_truth(config, &corpus, &truth_projection)?;
    let oracle = oracle_agreement(&responses)?;
    let table = strip_features(&responses.dataset)?;
    for (l, p) in &mut projections {
        if let Err(e) = p {
            log::warn!("bandwidth {l} is infeasible: {e}");
        }
    }
    Ok(PreparedStudy {
        corpus,
        descriptors,
        responses,
        oracle,
        inputs: StudyInputs { table, projections },
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepEntry {
    pub gap: f64,
    pub grid_points: usize,
    /// Agreement per basis kind, or the reason the run failed.
    pub agreement: BTreeMap<String, Result<f64, String>>,
}

/// Re-run the CV study on each grid spacing of the sweep with the same
/// responses (robustness to Δ).
pub fn delta_sweep(
    config: &StudyConfig,
    study: &PreparedStudy,
    exec: Execution,
) -> Result<Vec<SweepEntry>, PipelineError> {
    let mut out = Vec::new();
    for &gap in &config.grid.sweep {
        let inputs = inputs_for_grid(config, &study.descriptors, &study.inputs.table, gap, exec)?;
        let grid_points = build_grid(config, gap)?.len();
        let mut agreement = BTreeMap::new();
        for &kind in &config.basis.kinds {
            let a = loso_cv(&inputs, config, kind, exec)
                .map(|r| r.agreement())
                .map_err(|e| e.to_string());
            agreement.insert(kind.to_string(), a);
        }
        out.push(SweepEntry {
            gap,
            grid_points,
            agreement,
        });
    }
    Ok(out)
}
