use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use curreg_core::bases::{kernel_basis, BasisKind, KernelSpectrum};
use curreg_core::geometry::triangle_descriptors;
use curreg_core::ordreg::{Observation, OrdinalDataset, DEFAULT_LABELS};
use curreg_core::pipeline::{
    agreement_table, assemble_features, delta_sweep, leakage_check, loso_cv, prepare_study,
    project_corpus, select_hyperparams, ModelKind, PipelineError, StudyConfig, StudyInputs,
};
use curreg_core::rkhs::{Grid, GridKernel, KernelSpec, RawCurrent};
use curreg_core::synthcorp::{generate_body, BodyParams};
use curreg_core::Execution;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn names() -> Vec<String> {
    vec!["shirt.size".into(), "sex".into(), "age".into()]
}

fn small_config(subjects: usize) -> StudyConfig {
    let mut c = StudyConfig::default();
    c.corpus.subjects = subjects;
    c.corpus.resolution = 1;
    c.model.kind = ModelKind::Fixed;
    c.grid.lo = [-0.8, -0.8, -1.6];
    c.grid.hi = [0.8, 0.8, 1.6];
    c.grid.gap = 0.5;
    c
}

fn table(rows: Vec<(&str, f64, usize)>) -> OrdinalDataset {
    let rows = rows
        .into_iter()
        .map(|(s, size, y)| Observation {
            subject: s.to_string(),
            response: y,
            covariates: vec![size, 0.0, 6.0],
            z: Vec::new(),
        })
        .collect();
    OrdinalDataset::new(DEFAULT_LABELS.to_vec(), names(), 0, rows).unwrap()
}

/// Identical bodies under different subject ids, projected at λ.
fn identical_inputs(ids: &[&str], rows: OrdinalDataset) -> StudyInputs {
    let mesh = generate_body(&BodyParams {
        resolution: 1,
        ..BodyParams::default()
    })
    .unwrap();
    let descriptors: Vec<_> = ids
        .iter()
        .map(|id| {
            let mut d = triangle_descriptors(&mesh);
            d.label = id.to_string();
            d
        })
        .collect();
    let grid = Arc::new(Grid::build([-1.0; 3], [1.0; 3], 0.5).unwrap());
    let p = project_corpus(&descriptors, grid, 0.5, None, Execution::Sequential).unwrap();
    StudyInputs {
        table: rows,
        projections: vec![(0.5, Ok(p))],
    }
}

#[test]
fn one_subject_three_sizes_share_features() {
    let inputs = identical_inputs(
        &["a"],
        table(vec![("a", 3.0, 0), ("a", 4.0, 1), ("a", 5.0, 2)]),
    );
    let p = inputs.projection(0.5).unwrap();
    let basis = kernel_basis(&p.spectrum, 4).unwrap();
    let data = assemble_features(&p.reprs, &basis, &inputs.table).unwrap();
    assert_eq!(data.len(), 3);
    assert_eq!(data.r(), 4);
    let z0 = &data.rows()[0].z;
    assert!(data.rows().iter().all(|o| &o.z == z0));
    assert_eq!(z0, &basis.coefficients(&p.reprs["a"]).unwrap().values);

    let empty = OrdinalDataset::new(DEFAULT_LABELS.to_vec(), names(), 0, Vec::new()).unwrap();
    let out = assemble_features(&p.reprs, &basis, &empty).unwrap();
    assert!(out.is_empty());
}

#[test]
fn feature_assembly_errors() {
    let inputs = identical_inputs(&["a"], table(vec![("a", 3.0, 0), ("b", 4.0, 1)]));
    let p = inputs.projection(0.5).unwrap();
    let basis = kernel_basis(&p.spectrum, 2).unwrap();
    let err = assemble_features(&p.reprs, &basis, &inputs.table).unwrap_err();
    assert!(
        matches!(err, PipelineError::Data(ref m) if m.contains("`b`")),
        "{err}"
    );

    let dup = table(vec![("a", 3.0, 0), ("a", 3.0, 1)]);
    let err = assemble_features(&p.reprs, &basis, &dup).unwrap_err();
    assert!(err.to_string().contains("duplicate"), "{err}");
}

#[test]
fn corpus_features_match_direct_coefficients() {
    let config = small_config(20);
    let study = prepare_study(&config, Execution::Parallel).unwrap();
    let p = study.inputs.projection(config.kernel.lambda).unwrap();
    for kind in BasisKind::ALL {
        let basis = p.basis(kind, 5, |_| true).unwrap();
        let data = assemble_features(&p.reprs, &basis, &study.inputs.table).unwrap();
        assert_eq!(data.len(), study.inputs.table.len());
        for (row, src) in data.rows().iter().zip(study.inputs.table.rows()) {
            assert_eq!(row.subject, src.subject);
            assert_eq!(row.covariates, src.covariates);
            assert_eq!(row.response, src.response);
            assert_eq!(
                row.z,
                basis.coefficients(&p.reprs[&row.subject]).unwrap().values
            );
        }
    }
}

#[test]
fn paper_case_three_agreement() {
    let confusion = [[51, 12, 1], [10, 39, 12], [1, 11, 55]];
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for (i, row) in confusion.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            for _ in 0..c {
                truth.push(DEFAULT_LABELS[i]);
                pred.push(DEFAULT_LABELS[j]);
            }
        }
    }
    let t = agreement_table(&pred, &truth, &DEFAULT_LABELS).unwrap();
    assert_eq!(t.total, 192);
    assert_eq!(format!("{:.2}", t.agreement), "75.52");
    for (i, row) in confusion.iter().enumerate() {
        assert_eq!(t.confusion[i], row.to_vec());
    }
}

#[test]
fn agreement_matches_counting_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pred: Vec<i64> = (0..192).map(|_| rng.random_range(-1..=1)).collect();
    let truth: Vec<i64> = (0..192).map(|_| rng.random_range(-1..=1)).collect();
    let mut hits = 0;
    for i in 0..pred.len() {
        if pred[i] == truth[i] {
            hits += 1;
        }
    }
    let t = agreement_table(&pred, &truth, &DEFAULT_LABELS).unwrap();
    assert_eq!(t.agreement, 100.0 * hits as f64 / 192.0);
    assert_eq!(t.confusion.iter().flatten().sum::<usize>(), 192);
}

fn perfect_rows(ids: &[&'static str]) -> Vec<(&'static str, f64, usize)> {
    ids.iter()
        .flat_map(|&s| [(s, 3.0, 2), (s, 4.0, 1), (s, 5.0, 0)])
        .collect()
}

#[test]
fn identical_subjects_with_deterministic_response_are_predicted_perfectly() {
    let ids = ["a", "b", "c"];
    let inputs = identical_inputs(&ids, table(perfect_rows(&ids)));
    let mut config = StudyConfig::default();
    config.model.kind = ModelKind::Fixed;
    config.basis.r_kernel = 1;
    config.kernel.lambda = 0.5;
    let report = loso_cv(&inputs, &config, BasisKind::Kernel, Execution::Sequential).unwrap();
    assert_eq!(report.table.total, 9);
    assert_eq!(format!("{:.2}", report.agreement()), "100.00");
    assert!(report.leakage_ok());
}

#[test]
fn fewer_than_three_subjects_is_a_data_error() {
    let ids = ["a", "b"];
    let inputs = identical_inputs(&ids, table(perfect_rows(&ids)));
    let err = loso_cv(
        &inputs,
        &StudyConfig::default(),
        BasisKind::Kernel,
        Execution::Sequential,
    )
    .unwrap_err();
    assert!(matches!(err, PipelineError::Data(_)));
}

#[test]
fn report_ignores_row_order_and_execution_mode() {
    let mut config = small_config(12);
    config.cv.check_leakage = true;
    let study = prepare_study(&config, Execution::Parallel).unwrap();
    let mut shuffled_rows = study.inputs.table.rows().to_vec();
    shuffled_rows.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
    let shuffled = StudyInputs {
        table: OrdinalDataset::new(DEFAULT_LABELS.to_vec(), names(), 0, shuffled_rows).unwrap(),
        projections: study.inputs.projections.clone(),
    };
    for kind in [BasisKind::Kernel, BasisKind::Mixed] {
        let a = loso_cv(&study.inputs, &config, kind, Execution::Parallel).unwrap();
        let b = loso_cv(&shuffled, &config, kind, Execution::Sequential).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.table.total + a.skipped_rows, a.dataset_rows);
        assert_eq!(
            a.table.confusion.iter().flatten().sum::<usize>(),
            a.table.total
        );
        assert!(a.leakage_ok());
    }
}

#[test]
fn leakage_check_detects_a_basis_that_sees_the_held_out_subject() {
    let config = small_config(8);
    let study = prepare_study(&config, Execution::Parallel).unwrap();
    let p = study.inputs.projection(config.kernel.lambda).unwrap();
    let all: BTreeSet<String> = p.reprs.keys().cloned().collect();
    let held = BTreeSet::from(["c000".to_string()]);
    let train: BTreeSet<String> = all.difference(&held).cloned().collect();
    for kind in [BasisKind::Covariance, BasisKind::Mixed] {
        assert!(leakage_check(p, kind, 4, &train, &held).unwrap());
        assert!(!leakage_check(p, kind, 4, &all, &held).unwrap());
    }
}

#[test]
fn singleton_grid_needs_no_inner_cv() {
    let ids = ["a", "b", "c"];
    let inputs = StudyInputs {
        table: table(perfect_rows(&ids)),
        projections: Vec::new(),
    };
    let config = StudyConfig::default();
    let train = BTreeSet::from(["a".to_string(), "b".to_string()]);
    let sel = select_hyperparams(&inputs, &config, BasisKind::Mixed, &train).unwrap();
    assert_eq!((sel.lambda, sel.r, sel.inner_agreement), (0.5, 7, None));
}

#[test]
fn infeasible_bandwidth_is_excluded() {
    let mut config = small_config(10);
    config.kernel.lambda = 0.5;
    config.kernel.lambda_grid = vec![0.5, 1e4];
    config.grid.ridge = Some(0.0);
    let study = prepare_study(&config, Execution::Parallel).unwrap();
    assert!(study.inputs.projections[1].1.is_err());
    let train: BTreeSet<String> = study.inputs.table.subjects().into_iter().collect();
    let sel = select_hyperparams(&study.inputs, &config, BasisKind::Kernel, &train).unwrap();
    assert_eq!(sel.lambda, 0.5);
    assert_eq!(sel.inner_agreement, None);
}

#[test]
fn all_candidates_failing_is_a_config_error() {
    let ids = ["a", "b", "c", "d"];
    // every training fold lacks a category
    let rows = ids.iter().map(|&s| (s, 3.0, 1)).collect();
    let mut inputs = identical_inputs(&ids, table(rows));
    let p = inputs.projections[0].1.clone().unwrap();
    inputs.projections.push((0.7, Ok(p)));
    let mut config = StudyConfig::default();
    config.kernel.lambda_grid = vec![0.5, 0.7];
    let train: BTreeSet<String> = ids.iter().map(|s| s.to_string()).collect();
    let err = select_hyperparams(&inputs, &config, BasisKind::Kernel, &train).unwrap_err();
    assert!(matches!(err, PipelineError::Config { .. }), "{err}");
}

#[test]
fn planted_dimension_is_recovered_by_inner_selection() {
    let mut hits = 0;
    let reps = 5;
    for rep in 0..reps {
        let mut config = small_config(150);
        config.corpus.master_seed = 100 + rep;
        config.corpus.evaluation_weights = [0.0, 0.0, 1.0];
        config.truth.weights = vec![1.5; 5];
        config.truth.sd = 0.0;
        config.basis.r_grid = vec![1, 2, 3, 4, 5, 6, 7, 8, 9];
        let study = prepare_study(&config, Execution::Parallel).unwrap();
        let train: BTreeSet<String> = study.inputs.table.subjects().into_iter().collect();
        let sel = select_hyperparams(&study.inputs, &config, BasisKind::Kernel, &train).unwrap();
        if (4..=7).contains(&sel.r) {
            hits += 1;
        }
    }
    assert!(
        hits * 5 >= reps * 4,
        "r recovered in {hits}/{reps} replicates"
    );
}

#[test]
fn delta_sweep_reports_every_spacing() {
    let mut config = small_config(8);
    config.grid.sweep = vec![0.8, 0.6, 0.5];
    config.basis.kinds = vec![BasisKind::Kernel, BasisKind::Covariance];
    config.basis.r_covariance = 4;
    let study = prepare_study(&config, Execution::Parallel).unwrap();
    let sweep = delta_sweep(&config, &study, Execution::Parallel).unwrap();
    assert_eq!(sweep.len(), 3);
    assert!(sweep
        .windows(2)
        .all(|w| w[0].grid_points < w[1].grid_points));
    for e in &sweep {
        assert_eq!(e.agreement.len(), 2);
    }
}

#[test]
fn projection_reuses_grid_kernel_results() {
    // the study projection agrees with a direct projection of one body
    let config = small_config(3);
    let study = prepare_study(&config, Execution::Sequential).unwrap();
    let p = study.inputs.projection(config.kernel.lambda).unwrap();
    let kernel = KernelSpec::new(config.kernel.lambda).unwrap();
    let gk = GridKernel::new(p.grid().clone(), kernel, None).unwrap();
    let raw = RawCurrent::from_descriptors(&study.descriptors[1], kernel).unwrap();
    let direct = gk.project(&raw).unwrap();
    assert_eq!(direct.beta(), p.reprs["c001"].beta());
    let _ = KernelSpectrum::new(p.grid().clone(), kernel);
    let _: BTreeMap<_, _> = p
        .reprs
        .iter()
        .map(|(k, v)| (k.clone(), v.label.clone()))
        .collect();
}
