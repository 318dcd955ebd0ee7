use std::collections::BTreeSet;

use nalgebra::DMatrix;

use super::config::{ModelKind, StudyConfig};
use super::features::assemble_features;
use super::report::{agreement_table, CVReport, FoldRecord, PredictionRecord};
use super::study::{Projection, StudyInputs};
use super::PipelineError;
use crate::bases::{write_basis, BasisKind, BasisSet};
use crate::exec::Execution;
use crate::ordreg::{
    fit_fixed, fit_mixed, predict_category, OrdinalDataset, OrdinalModel, OrdregError,
};
use crate::rkhs::CurrentRepr;

/// Fit the configured model. A separated fit yields the capped model with a
/// warning, since its modal predictions are still well defined.
pub fn fit_model(
    data: &OrdinalDataset,
    gram: &DMatrix<f64>,
    config: &StudyConfig,
) -> Result<OrdinalModel, OrdregError> {
    let options = config.model.fit_options();
    let fit = match config.model.kind {
        ModelKind::Fixed => fit_fixed(data, gram, &options),
        ModelKind::Mixed => fit_mixed(data, gram, &options),
    };
    match fit {
        Err(OrdregError::Separation { model }) => {
            let mut model = *model;
            model
                .fit_info
                .warnings
                .push("complete separation; coefficients capped".into());
            Ok(model)
        }
        other => other,
    }
}

/// Basis for a training set: kernel bases are global, covariance and mixed
/// bases use only the currents of `train`.
pub fn fold_basis(
    projection: &Projection,
    kind: BasisKind,
    r: usize,
    train: &BTreeSet<String>,
) -> Result<BasisSet, PipelineError> {
    projection.basis(kind, r, |id| train.contains(id))
}

/// Train on `train`, predict every row of `test` by the modal category with
/// the random effect at its prior mean.
fn evaluate_split(
    projection: &Projection,
    kind: BasisKind,
    r: usize,
    table: &OrdinalDataset,
    train: &BTreeSet<String>,
    test: &BTreeSet<String>,
    config: &StudyConfig,
) -> Result<(Vec<PredictionRecord>, Vec<String>), String> {
    let basis = fold_basis(projection, kind, r, train).map_err(|e| e.to_string())?;
    let train_table = table.filter_subjects(|s| train.contains(s));
    let missing = train_table.missing_categories();
    if !missing.is_empty() {
        return Err(format!("training data lacks categories {missing:?}"));
    }
    let train_data =
        assemble_features(&projection.reprs, &basis, &train_table).map_err(|e| e.to_string())?;
    let model = fit_model(&train_data, basis.hk_gram(), config).map_err(|e| e.to_string())?;
    let test_table = table.filter_subjects(|s| test.contains(s));
    let test_data =
        assemble_features(&projection.reprs, &basis, &test_table).map_err(|e| e.to_string())?;
    let labels = table.labels();
    let mut out = Vec::with_capacity(test_data.len());
    for row in test_data.rows() {
        let j =
            predict_category(&model, &row.covariates, &row.z, 0.0).map_err(|e| e.to_string())?;
        out.push(PredictionRecord {
            subject: row.subject.clone(),
            covariates: row.covariates.clone(),
            truth: labels[row.response],
            predicted: labels[j],
        });
    }
    Ok((out, model.fit_info.warnings))
}

/// Hyperparameters chosen on a training set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub lambda: f64,
    pub r: usize,
    /// Inner agreement of the winner (`None` when no inner CV was needed).
    pub inner_agreement: Option<f64>,
}

/// Pick (λ, r) by inner cross-validation over `train` only: leave-one-subject-out
/// up to `cv.inner_loso_max_subjects` training subjects, κ-fold beyond.
/// Highest inner agreement wins; ties go to smaller r, then larger λ.
pub fn select_hyperparams(
    inputs: &StudyInputs,
    config: &StudyConfig,
    kind: BasisKind,
    train: &BTreeSet<String>,
) -> Result<Selection, PipelineError> {
    let lambdas = config.lambda_candidates();
    let rs = config.basis.r_candidates(kind);
    if lambdas.len() == 1 && rs.len() == 1 {
        return Ok(Selection {
            lambda: lambdas[0],
            r: rs[0],
            inner_agreement: None,
        });
    }
    let feasible: Vec<(f64, usize)> = lambdas
        .iter()
        .filter(|&&l| inputs.projection(l).is_some())
        .flat_map(|&l| rs.iter().map(move |&r| (l, r)))
        .collect();
    match feasible.len() {
        0 => {
            return Err(PipelineError::config(
                "kernel.lambda_grid",
                "no bandwidth candidate gives a valid projection",
            ))
        }
        1 => {
            return Ok(Selection {
                lambda: feasible[0].0,
                r: feasible[0].1,
                inner_agreement: None,
            })
        }
        _ => {}
    }

    let subjects: Vec<&String> = train.iter().collect();
    let folds: Vec<BTreeSet<String>> = if subjects.len() <= config.cv.inner_loso_max_subjects {
        subjects
            .iter()
            .map(|s| BTreeSet::from([(*s).clone()]))
            .collect()
    } else {
        let k = config.cv.kappa.min(subjects.len());
        (0..k)
            .map(|f| {
                subjects
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i % k == f)
                    .map(|(_, s)| (*s).clone())
                    .collect()
            })
            .collect()
    };

    let mut best: Option<(f64, Selection)> = None;
    for (lambda, r) in feasible {
        let projection = inputs.projection(lambda).expect("feasible bandwidth");
        let (mut hits, mut total) = (0usize, 0usize);
        for test in &folds {
            let inner_train: BTreeSet<String> = train.difference(test).cloned().collect();
            if let Ok((preds, _)) = evaluate_split(
                projection,
                kind,
                r,
                &inputs.table,
                &inner_train,
                test,
                config,
            ) {
                total += preds.len();
                hits += preds.iter().filter(|p| p.truth == p.predicted).count();
            }
        }
        if total == 0 {
            log::debug!("candidate λ = {lambda}, r = {r} failed on every inner fold");
            continue;
        }
        let score = hits as f64 / total as f64;
        let better = match &best {
            None => true,
            Some((s, b)) => {
                score > *s || (score == *s && (r < b.r || (r == b.r && lambda > b.lambda)))
            }
        };
        if better {
            best = Some((
                score,
                Selection {
                    lambda,
                    r,
                    inner_agreement: Some(100.0 * score),
                },
            ));
        }
    }
    best.map(|(_, s)| s).ok_or_else(|| {
        PipelineError::config(
            "basis.r_grid",
            "every (λ, r) candidate failed to fit in the inner cross-validation",
        )
    })
}

/// Rebuild the fold basis after perturbing the held-out currents and report
/// whether it is bit-identical to the original.
pub fn leakage_check(
    projection: &Projection,
    kind: BasisKind,
    r: usize,
    train: &BTreeSet<String>,
    held_out: &BTreeSet<String>,
) -> Result<bool, PipelineError> {
    let reference = write_basis(&fold_basis(projection, kind, r, train)?);
    let mut perturbed = projection.clone();
    for id in held_out {
        if let Some(c) = perturbed.reprs.get_mut(id) {
            let beta = c.beta().map(|b| 1.5 * b + 0.1);
            *c = CurrentRepr::from_beta(c.label.clone(), c.grid().clone(), *c.kernel(), beta)?;
        }
    }
    Ok(write_basis(&fold_basis(&perturbed, kind, r, train)?) == reference)
}

struct FoldOutcome {
    record: FoldRecord,
    predictions: Vec<PredictionRecord>,
}

fn run_fold(
    inputs: &StudyInputs,
    config: &StudyConfig,
    kind: BasisKind,
    all: &BTreeSet<String>,
    subject: &str,
    rows: usize,
) -> FoldOutcome {
    let test = BTreeSet::from([subject.to_string()]);
    let train: BTreeSet<String> = all.difference(&test).cloned().collect();
    let mut record = FoldRecord {
        subject: subject.to_string(),
        lambda: None,
        r: None,
        rows,
        skipped: None,
        leakage_ok: None,
        warnings: Vec::new(),
    };
    let skip = |mut record: FoldRecord, reason: String| {
        log::warn!("fold {subject} skipped: {reason}");
        record.skipped = Some(reason);
        FoldOutcome {
            record,
            predictions: Vec::new(),
        }
    };
    let sel = match select_hyperparams(inputs, config, kind, &train) {
        Ok(s) => s,
        Err(e) => return skip(record, e.to_string()),
    };
    record.lambda = Some(sel.lambda);
    record.r = Some(sel.r);
    let Some(projection) = inputs.projection(sel.lambda) else {
        return skip(
            record,
            format!("bandwidth {} has no valid projection", sel.lambda),
        );
    };
    let (predictions, warnings) = match evaluate_split(
        projection,
        kind,
        sel.r,
        &inputs.table,
        &train,
        &test,
        config,
    ) {
        Ok(p) => p,
        Err(e) => return skip(record, e),
    };
    record.warnings = warnings;
    if config.cv.check_leakage {
        match leakage_check(projection, kind, sel.r, &train, &test) {
            Ok(ok) => record.leakage_ok = Some(ok),
            Err(e) => record
                .warnings
                .push(format!("leakage check failed to run: {e}")),
        }
    }
    FoldOutcome {
        record,
        predictions,
    }
}

/// Leave-one-subject-out cross-validation of one basis kind.
pub fn loso_cv(
    inputs: &StudyInputs,
    config: &StudyConfig,
    kind: BasisKind,
    exec: Execution,
) -> Result<CVReport, PipelineError> {
    let table = &inputs.table;
    let ranges = table.subject_ranges();
    if ranges.len() < 3 {
        return Err(PipelineError::Data(format!(
            "cross-validation needs at least 3 subjects, got {}",
            ranges.len()
        )));
    }
    let all: BTreeSet<String> = ranges.iter().map(|(s, _)| s.clone()).collect();
    let outcomes = exec.map(&ranges, |(s, range)| {
        run_fold(inputs, config, kind, &all, s, range.len())
    });

    let mut folds = Vec::with_capacity(outcomes.len());
    let mut predictions = Vec::new();
    let mut skipped_rows = 0;
    for o in outcomes {
        if o.record.skipped.is_some() {
            skipped_rows += o.record.rows;
        }
        folds.push(o.record);
        predictions.extend(o.predictions);
    }
    let predicted: Vec<i64> = predictions.iter().map(|p| p.predicted).collect();
    let truth: Vec<i64> = predictions.iter().map(|p| p.truth).collect();
    let table_out = agreement_table(&predicted, &truth, table.labels())?;
    debug_assert_eq!(table_out.total, table.len() - skipped_rows);
    Ok(CVReport {
        kind,
        table: table_out,
        dataset_rows: table.len(),
        skipped_rows,
        folds,
        predictions,
        config: config.echo(),
    })
}
