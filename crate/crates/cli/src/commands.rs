use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use curreg_core::bases::{read_basis, write_basis, BasisKind, BasisSet, KernelSpectrum};
use curreg_core::geometry::{write_off, DescriptorSet};
use curreg_core::hashing::{hash_bytes, ContentHasher};
use curreg_core::ordreg::OrdinalModel;
use curreg_core::pipeline::{
    assemble_features, delta_sweep, descriptor_hash, fit_model, loso_cv, prepare_study_with,
    CVReport, PreparedStudy, Projection, StudyConfig,
};
use curreg_core::rkhs::{
    read_current_repr, write_current_repr, CurrentRepr, Grid, GridKernel, KernelSpec, RawCurrent,
};
use curreg_core::synthcorp::generate_body;
use curreg_core::textio::fmt_f64;
use curreg_core::Execution;

use crate::error::CliError;
use crate::store::{read_text, write_atomic, Run};

pub struct Ctx {
    pub config: StudyConfig,
    pub exec: Execution,
}

fn lambda_dir(lambda: f64) -> String {
    format!("currents/lambda-{}", fmt_f64(lambda))
}

enum CacheEvent {
    Wrote(String, String),
    Reused(String),
}

fn cached_repr(
    path: &std::path::Path,
    grid: &Grid,
    lambda: f64,
    ridge: f64,
    source: &str,
) -> Option<CurrentRepr> {
    let repr = read_current_repr(&std::fs::read_to_string(path).ok()?).ok()?;
    let valid = repr.grid().hash() == grid.hash()
        && repr.kernel().bandwidth().to_bits() == lambda.to_bits()
        && repr.epsilon.to_bits() == ridge.to_bits()
        && repr.source.as_deref() == Some(source);
    valid.then_some(repr)
}

/// Projection that reads hash-valid representatives from the output
/// directory and writes the ones it has to compute.
fn caching_projector<'a>(
    run: &'a Run,
    ctx: &'a Ctx,
    events: &'a Mutex<Vec<CacheEvent>>,
) -> impl Fn(
    &[DescriptorSet],
    Arc<Grid>,
    f64,
) -> Result<Projection, curreg_core::pipeline::PipelineError>
       + 'a {
    move |descriptors, grid, lambda| {
        let kernel = KernelSpec::new(lambda)?;
        let ridge = ctx
            .config
            .grid
            .ridge
            .unwrap_or_else(|| GridKernel::default_ridge(&grid));
        let dir = lambda_dir(lambda);
        let sources: Vec<String> = ctx.exec.map(descriptors, descriptor_hash);
        let paths: Vec<String> = descriptors
            .iter()
            .map(|d| format!("{dir}/{}.repr", d.label))
            .collect();
        let cached: Vec<Option<CurrentRepr>> = ctx.exec.map_range(descriptors.len(), |i| {
            cached_repr(&run.path(&paths[i]), &grid, lambda, ridge, &sources[i])
        });
        let gk = if cached.iter().any(Option::is_none) {
            Some(GridKernel::new(grid.clone(), kernel, Some(ridge))?)
        } else {
            None
        };
        let computed: Vec<Result<CurrentRepr, curreg_core::pipeline::PipelineError>> =
            ctx.exec.map_range(descriptors.len(), |i| match &cached[i] {
                Some(c) => Ok(c.clone()),
                None => {
                    let gk = gk.as_ref().expect("grid kernel built for cache misses");
                    let raw = RawCurrent::from_descriptors(&descriptors[i], kernel)?;
                    let mut repr = gk.project(&raw)?;
                    repr.source = Some(sources[i].clone());
                    Ok(repr)
                }
            });
        let mut reprs = BTreeMap::new();
        let mut ev = events.lock().expect("event log");
        for (i, r) in computed.into_iter().enumerate() {
            let r = r?;
            if cached[i].is_some() {
                ev.push(CacheEvent::Reused(paths[i].clone()));
            } else {
                let text = write_current_repr(&r);
                write_atomic(&run.path(&paths[i]), text.as_bytes())
                    .map_err(|e| curreg_core::pipeline::PipelineError::Data(e.to_string()))?;
                ev.push(CacheEvent::Wrote(
                    paths[i].clone(),
                    hash_bytes(text.as_bytes()),
                ));
            }
            reprs.insert(r.label.clone(), r);
        }
        Ok(Projection {
            lambda,
            spectrum: Arc::new(KernelSpectrum::new(grid, kernel)),
            reprs,
        })
    }
}

/// Corpus, currents (cached) and synthetic responses.
fn prepare(run: &mut Run, ctx: &Ctx) -> Result<PreparedStudy, CliError> {
    let events = Mutex::new(Vec::new());
    let t = std::time::Instant::now();
    let study = {
        let project = caching_projector(run, ctx, &events);
        prepare_study_with(&ctx.config, ctx.exec, project)
    };
    let study = study?;
    log::info!("study prepared in {:.2?}", t.elapsed());
    run.add_timing("prepare", t.elapsed());
    for e in events.into_inner().expect("event log") {
        match e {
            CacheEvent::Wrote(p, h) => run.record(&p, h),
            CacheEvent::Reused(p) => run.reused(&p),
        }
    }
    Ok(study)
}

fn projection<'a>(
    study: &'a PreparedStudy,
    config: &StudyConfig,
) -> Result<&'a Projection, CliError> {
    let lambda = config.kernel.lambda;
    match study
        .inputs
        .projections
        .iter()
        .find(|(l, _)| l.to_bits() == lambda.to_bits())
    {
        Some((_, Ok(p))) => Ok(p),
        Some((_, Err(e))) => Err(CliError::Numerical(format!(
            "projection at λ = {lambda} failed: {e}"
        ))),
        None => Err(CliError::config(
            "kernel.lambda",
            "not among the projected bandwidths",
        )),
    }
}

fn basis_key(p: &Projection, kind: BasisKind, r: usize) -> String {
    let mut h = ContentHasher::new();
    h.str(kind.as_str())
        .u64(r as u64)
        .f64(p.lambda)
        .str(p.grid().hash());
    if kind.is_data_dependent() {
        for (id, c) in &p.reprs {
            h.str(id)
                .str(c.source.as_deref().unwrap_or("-"))
                .f64(c.epsilon);
        }
    }
    h.finish_hex()
}

/// Full-sample basis of one kind, consumed from disk when its key matches.
fn basis(
    run: &mut Run,
    ctx: &Ctx,
    study: &PreparedStudy,
    kind: BasisKind,
) -> Result<BasisSet, CliError> {
    let p = projection(study, &ctx.config)?;
    let r = ctx.config.basis.r_for(kind);
    let key = basis_key(p, kind, r);
    let (path, key_path) = (format!("bases/{kind}.basis"), format!("bases/{kind}.key"));
    if let (Ok(k), Ok(text)) = (
        std::fs::read_to_string(run.path(&key_path)),
        std::fs::read_to_string(run.path(&path)),
    ) {
        if k.trim() == key {
            if let Ok(b) = read_basis(&text) {
                run.reused(&path);
                return Ok(b);
            }
        }
    }
    let b = run.time("basis", || p.basis(kind, r, |_| true))?;
    run.write(&path, &write_basis(&b))?;
    run.write(&key_path, &format!("{key}\n"))?;
    Ok(b)
}

pub fn gen_corpus(run: &mut Run, ctx: &Ctx) -> Result<(), CliError> {
    let study = prepare(run, ctx)?;
    let meshes: Vec<Result<(String, String), CliError>> =
        ctx.exec.map(&study.corpus.subjects, |s| {
            let mesh = generate_body(&s.body)?;
            Ok((s.mesh_path(), write_off(&mesh)))
        });
    for m in meshes {
        let (path, text) = m?;
        run.write(&path, &text)?;
    }
    run.write("corpus.json", &(study.corpus.manifest_json() + "\n"))?;
    run.write("table.csv", &study.inputs.table.to_csv_string())?;
    run.write("truth.json", &study.responses.truth.to_json())?;
    let effects =
        serde_json::to_string_pretty(&study.responses.effects).expect("effects serialize") + "\n";
    run.write("truth_effects.json", &effects)?;
    run.write("oracle.json", &oracle_json(&study))?;
    println!(
        "{} subjects, {} observations, oracle agreement {:.2}%",
        study.corpus.subjects.len(),
        study.inputs.table.len(),
        study.oracle.realized
    );
    Ok(())
}

fn oracle_json(study: &PreparedStudy) -> String {
    serde_json::to_string_pretty(&study.oracle).expect("oracle serializes") + "\n"
}

pub fn project(run: &mut Run, ctx: &Ctx) -> Result<(), CliError> {
    let study = prepare(run, ctx)?;
    for (lambda, p) in &study.inputs.projections {
        match p {
            Ok(p) => {
                let worst = p.reprs.values().map(|c| c.residual).fold(0.0, f64::max);
                println!(
                    "λ = {lambda}: {} currents on {} grid points, max residual {worst:.3e}, kernel tail mass {:.3e}",
                    p.reprs.len(),
                    p.grid().len(),
                    p.spectrum.tail_mass_ratio()
                );
            }
            Err(e) => println!("λ = {lambda}: infeasible ({e})"),
        }
    }
    Ok(())
}

pub fn basis_cmd(run: &mut Run, ctx: &Ctx) -> Result<(), CliError> {
    let study = prepare(run, ctx)?;
    for &kind in &ctx.config.basis.kinds {
        let b = basis(run, ctx, &study, kind)?;
        let eig: Vec<String> = b.eigenvalues().iter().map(|v| format!("{v:.4e}")).collect();
        println!(
            "{kind}: r = {}, numerical rank {}, eigenvalues [{}]",
            b.r(),
            b.numerical_rank(),
            eig.join(", ")
        );
    }
    Ok(())
}

pub fn features(run: &mut Run, ctx: &Ctx) -> Result<(), CliError> {
    let study = prepare(run, ctx)?;
    for &kind in &ctx.config.basis.kinds {
        let b = basis(run, ctx, &study, kind)?;
        let p = projection(&study, &ctx.config)?;
        let data = assemble_features(&p.reprs, &b, &study.inputs.table)?;
        run.write(&format!("features/{kind}.csv"), &data.to_csv_string())?;
        println!("{kind}: {} rows × {} features", data.len(), data.r());
    }
    Ok(())
}

fn model_summary(kind: BasisKind, m: &OrdinalModel) -> String {
    let info = &m.fit_info;
    let mut s = String::new();
    let _ = writeln!(s, "basis: {kind}");
    let _ = writeln!(
        s,
        "method: {}, log-likelihood {:.4}, {} iterations, converged: {}",
        info.method, info.loglik, info.iterations, info.converged
    );
    let se = |v: &[f64], i: usize| v.get(i).map_or("-".to_string(), |x| format!("{x:.4}"));
    for (i, a) in m.thresholds.iter().enumerate() {
        let _ = writeln!(
            s,
            "  alpha_{:<12} {a:>10.4}  se {}",
            i + 1,
            se(&info.se_thresholds, i)
        );
    }
    for (i, (n, b)) in m.covariate_names.iter().zip(&m.scalar_coefs).enumerate() {
        let _ = writeln!(s, "  {n:<18} {b:>10.4}  se {}", se(&info.se_scalar, i));
    }
    for (i, b) in m.functional_coefs.iter().enumerate() {
        let _ = writeln!(
            s,
            "  b_{:<16} {b:>10.4}  se {}",
            i + 1,
            se(&info.se_functional, i)
        );
    }
    match m.random_intercept_sd {
        Some(sd) => {
            let se_sd = info.se_sd.map_or("-".to_string(), |x| format!("{x:.4}"));
            let _ = writeln!(s, "  sd(u)              {sd:>10.4}  se {se_sd}");
        }
        None => {
            let _ = writeln!(s, "  sd(u)              (fixed-effects fit)");
        }
    }
    for w in &info.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

pub fn fit(run: &mut Run, ctx: &Ctx) -> Result<(), CliError> {
    let study = prepare(run, ctx)?;
    for &kind in &ctx.config.basis.kinds {
        let b = basis(run, ctx, &study, kind)?;
        let p = projection(&study, &ctx.config)?;
        let data = assemble_features(&p.reprs, &b, &study.inputs.table)?;
        let model = run.time("fit", || fit_model(&data, b.hk_gram(), &ctx.config))?;
        run.write(&format!("models/{kind}.json"), &model.to_json())?;
        let summary = model_summary(kind, &model);
        run.write(&format!("models/{kind}.txt"), &summary)?;
        print!("{summary}");
    }
    Ok(())
}

pub fn cv(run: &mut Run, ctx: &Ctx, sweep: bool) -> Result<(), CliError> {
    let study = prepare(run, ctx)?;
    run.write("reports/oracle.json", &oracle_json(&study))?;
    for &kind in &ctx.config.basis.kinds {
        let report = run.time(&format!("cv_{kind}"), || {
            loso_cv(&study.inputs, &ctx.config, kind, ctx.exec)
        })?;
        if !report.leakage_ok() {
            return Err(CliError::Numerical(format!(
                "leakage detected in a {kind} fold"
            )));
        }
        run.write(&format!("reports/cv_{kind}.json"), &report.to_json())?;
        let text = report.to_text();
        run.write(&format!("reports/cv_{kind}.txt"), &text)?;
        print!("{text}");
    }
    if sweep {
        let entries = run.time("delta_sweep", || delta_sweep(&ctx.config, &study, ctx.exec))?;
        let json = serde_json::to_string_pretty(&entries).expect("sweep serializes") + "\n";
        run.write("reports/delta_sweep.json", &json)?;
        for e in &entries {
            let cells: Vec<String> = e
                .agreement
                .iter()
                .map(|(k, a)| match a {
                    Ok(v) => format!("{k} {v:.2}%"),
                    Err(m) => format!("{k} failed ({m})"),
                })
                .collect();
            println!(
                "Δ = {} ({} points): {}",
                e.gap,
                e.grid_points,
                cells.join(", ")
            );
        }
    }
    Ok(())
}

pub fn report(run: &mut Run, ctx: &Ctx) -> Result<(), CliError> {
    let mut s = String::new();
    let mut found = 0;
    for &kind in &ctx.config.basis.kinds {
        let path = run.path(&format!("reports/cv_{kind}.json"));
        if !path.exists() {
            continue;
        }
        let r = CVReport::from_json(&read_text(&path)?)?;
        found += 1;
        s.push_str(&r.to_text());
        s.push('\n');
    }
    if found == 0 {
        return Err(CliError::Data(format!(
            "no CV reports under {}; run `curreg cv` first",
            run.path("reports").display()
        )));
    }
    let oracle_path = run.path("reports/oracle.json");
    if oracle_path.exists() {
        let o: serde_json::Value = serde_json::from_str(&read_text(&oracle_path)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", oracle_path.display())))?;
        let _ = writeln!(
            s,
            "oracle (Bayes rule under the generator): {:.2}% realized, {:.2}% expected",
            o["realized"].as_f64().unwrap_or(f64::NAN),
            o["expected"].as_f64().unwrap_or(f64::NAN)
        );
    }
    run.write("reports/summary.txt", &s)?;
    print!("{s}");
    Ok(())
}
