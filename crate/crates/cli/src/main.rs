mod commands;
mod error;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use curreg_core::bases::BasisKind;
use curreg_core::Execution;

use crate::commands::Ctx;
use crate::error::CliError;
use crate::store::{load_config, Run};

/// Surface-current features and ordinal fit regression, batch front end.
#[derive(Parser)]
#[command(name = "curreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Study configuration (TOML); built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores); never changes results.
    #[arg(long)]
    jobs: Option<usize>,
    /// Master seed override (`corpus.master_seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict to one basis kind (`basis.kinds`).
    #[arg(long)]
    kind: Option<BasisKind>,
    /// Config override `section.key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus: meshes, covariates, responses, truth.
    GenCorpus(Common),
    /// Project every surface current onto the evaluation grid.
    Project(Common),
    /// Build the configured bases over the full sample.
    Basis(Common),
    /// Write the per-observation feature tables.
    Features(Common),
    /// Fit the ordinal model on the full sample.
    Fit(Common),
    /// Leave-one-subject-out cross-validation.
    Cv {
        #[command(flatten)]
        common: Common,
        /// Also run the grid-spacing robustness sweep.
        #[arg(long)]
        sweep: bool,
    },
    /// Summarize existing CV reports.
    Report(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::GenCorpus(c) => ("gen-corpus", c),
            Command::Project(c) => ("project", c),
            Command::Basis(c) => ("basis", c),
            Command::Features(c) => ("features", c),
            Command::Fit(c) => ("fit", c),
            Command::Cv { common, .. } => ("cv", common),
            Command::Report(c) => ("report", c),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common) = cli.command.parts();
    let mut overrides = common.set.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("corpus.master_seed={seed}"));
    }
    if let Some(kind) = common.kind {
        overrides.push(format!("basis.kinds=[\"{kind}\"]"));
    }
    if let Some(jobs) = common.jobs {
        overrides.push(format!("execution.jobs={jobs}"));
    }
    let config = load_config(common.config.as_deref(), &overrides)?;
    let jobs = config.execution.jobs;
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::config("execution.jobs", e.to_string()))?;
    }
    let exec = if jobs == 1 {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let ctx = Ctx { config, exec };
    let mut run = Run::new(&common.out, name);
    run.write("config.toml", &ctx.config.to_toml())?;
    match &cli.command {
        Command::GenCorpus(_) => commands::gen_corpus(&mut run, &ctx)?,
        Command::Project(_) => commands::project(&mut run, &ctx)?,
        Command::Basis(_) => commands::basis_cmd(&mut run, &ctx)?,
        Command::Features(_) => commands::features(&mut run, &ctx)?,
        Command::Fit(_) => commands::fit(&mut run, &ctx)?,
        Command::Cv { sweep, .. } => commands::cv(&mut run, &ctx, *sweep)?,
        Command::Report(_) => commands::report(&mut run, &ctx)?,
    }
    run.finish(&ctx.config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("curreg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
