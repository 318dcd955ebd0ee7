//! Run the default synthetic study and print agreement per basis.

use std::time::Instant;

use curreg_core::pipeline::{loso_cv, prepare_study, StudyConfig};
use curreg_core::Execution;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = match std::env::args().nth(1) {
        Some(path) => StudyConfig::from_toml(&std::fs::read_to_string(path)?)?,
        None => StudyConfig::default(),
    };
    let t = Instant::now();
    let study = prepare_study(&config, Execution::Parallel)?;
    println!(
        "{} rows, category counts {:?}, oracle {:.2}% (expected {:.2}%), prepared in {:.1?}",
        study.inputs.table.len(),
        study.inputs.table.category_counts(),
        study.oracle.realized,
        study.oracle.expected,
        t.elapsed()
    );
    for &kind in &config.basis.kinds {
        let t = Instant::now();
        let report = loso_cv(&study.inputs, &config, kind, Execution::Parallel)?;
        println!(
            "{:<10} {:6.2}%  leakage ok: {}  ({:.1?})",
            kind,
            report.agreement(),
            report.leakage_ok(),
            t.elapsed()
        );
    }
    Ok(())
}
