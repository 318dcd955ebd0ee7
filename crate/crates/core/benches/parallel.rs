use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use curreg_core::bases::BasisKind;
use curreg_core::pipeline::{
    build_grid, corpus_descriptors, loso_cv, prepare_study, project_corpus, ModelKind, StudyConfig,
};
use curreg_core::synthcorp::generate_corpus;
use curreg_core::Execution;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn config() -> StudyConfig {
    let mut c = StudyConfig::default();
    c.corpus.subjects = 24;
    c.model.kind = ModelKind::Fixed;
    c
}

fn projection(c: &mut Criterion) {
    let cfg = config();
    let corpus = generate_corpus(&cfg.corpus).unwrap();
    let descriptors = corpus_descriptors(&corpus, Execution::Sequential).unwrap();
    let grid = build_grid(&cfg, cfg.grid.gap).unwrap();
    let mut group = c.benchmark_group("project_corpus");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                project_corpus(
                    black_box(&descriptors),
                    grid.clone(),
                    cfg.kernel.lambda,
                    None,
                    exec,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn cross_validation(c: &mut Criterion) {
    let cfg = config();
    let study = prepare_study(&cfg, Execution::Parallel).unwrap();
    let mut group = c.benchmark_group("loso_cv_mixed_basis");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| loso_cv(black_box(&study.inputs), &cfg, BasisKind::Mixed, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, projection, cross_validation);
criterion_main!(benches);
