//! Command-line pipeline driver.
//!
//! Every stage writes content-addressed artifacts into the output
//! directory: the file name carries a digest of the stage's configuration
//! and of its upstream artifacts, so reruns reuse finished work and a
//! changed setting produces a new file instead of overwriting an old one.

mod config;
mod pipeline;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use thiserror::Error;

pub use config::{
    AnnotateConfig, AuditConfig, CorpusConfig, DatasetConfig, EvalConfig, HeldoutConfig, PoolChoice,
    PoolConfig, RunConfig, ScorerConfig, SubsetConfig, TeacherConfig, API_KEY_ENV,
};
pub use pipeline::{AnnotateReport, Pipeline};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error("output directory is locked by another command ({0}); remove it if no command is running")]
    Locked(PathBuf),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Catalog(#[from] crate::catalog::CatalogError),
    #[error(transparent)]
    Annotator(#[from] crate::annotator::AnnotatorError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Score(#[from] crate::scorer::ScoreError),
    #[error(transparent)]
    Matcher(#[from] crate::matcher::MatcherError),
    #[error(transparent)]
    Template(#[from] crate::templates::TemplateError),
    #[error("teacher: {0}")]
    Teacher(String),
}

#[derive(Debug, Parser)]
#[command(
    name = "recprompt",
    version,
    about = "Recommendation instruction corpora and reranking evaluation"
)]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Recompute artifacts even when a matching one exists.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest raw data, apply k-core filtering and build user sequences.
    Ingest,
    /// Write the leave-one-out split, and the product-search split when
    /// queries are configured.
    Split,
    /// Warm the annotation cache with teacher completions.
    Annotate,
    /// Generate the instruction corpus and print its statistics.
    Corpus,
    /// Write an audit sheet, or aggregate a reviewed one.
    Audit {
        /// Reviewed sheet to aggregate instead of sampling a new one.
        #[arg(long)]
        aggregate: Option<PathBuf>,
        /// Instances sampled per fine-grained kind.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Evaluate scenarios, run the held-out sweep, or plot curve data.
    Eval {
        /// Aspect triple such as P1-I0-T3; repeats allowed. Defaults to the
        /// configured scenarios.
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        /// Fix the template instead of choosing on validation.
        #[arg(long)]
        template: Option<String>,
        #[arg(long, value_enum)]
        pool: Option<PoolChoice>,
        /// lexical | mock-oracle | mock-inverse-oracle | mock-random:SEED |
        /// fixture:PATH | remote:URL
        #[arg(long)]
        scorer: Option<String>,
        /// Record every score request and response to this fixture file.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Manifest path (single scenario only).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run the configured held-out scenario sweep.
        #[arg(long)]
        heldout: bool,
        /// Render a curve-data file to SVG and exit.
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long, default_value = "ndcg@5")]
        metric: String,
    },
    /// Serve a scorer fixture over the scoring wire protocol.
    ServeFixture {
        #[arg(long, default_value_t = 0)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Fixture file; defaults to the configured fixture scorer.
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
}

/// What a command produced. The binary prints `report` and then the
/// artifact paths; library callers get them silently.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub report: String,
    /// An evaluation was marked invalid or a corpus came out partial.
    pub degraded: bool,
}

impl Outcome {
    pub fn new(artifacts: Vec<PathBuf>, report: String) -> Self {
        Outcome {
            artifacts,
            report,
            degraded: false,
        }
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &std::path::Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(".recprompt.lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(path)),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("this command needs --config <FILE>".into()))?;
    RunConfig::load(path)
}

/// Parse `args` and run the command.
pub fn run<I, T>(args: I) -> Result<Outcome, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(Outcome::default());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string())),
    };
    execute(&cli)
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::ServeFixture { port, host, fixture } => {
            let path = match fixture {
                Some(p) => p.clone(),
                None => match load_config(cli)?.scorer {
                    ScorerConfig::Fixture { path } => path,
                    _ => {
                        return Err(CliError::Usage(
                            "serve-fixture needs --fixture or a fixture scorer".into(),
                        ))
                    }
                },
            };
            pipeline::serve_fixture(&path, host, *port)
        }
        Command::Eval {
            plot: Some(curve),
            metric,
            ..
        } => pipeline::plot(curve, metric),
        Command::Audit {
            aggregate: Some(sheet),
            ..
        } => pipeline::aggregate_sheet(sheet),
        command => {
            let config = load_config(cli)?;
            let _lock = DirLock::acquire(&config.output_dir)?;
            let p = Pipeline::new(config, cli.force);
            match command {
                Command::Ingest => p.cmd_ingest(),
                Command::Split => p.cmd_split(),
                Command::Annotate => p.cmd_annotate().map(|(o, _)| o),
                Command::Corpus => p.cmd_corpus(),
                Command::Audit { n, .. } => p.cmd_audit(*n),
                Command::Eval {
                    scenarios,
                    template,
                    pool,
                    scorer,
                    record,
                    out,
                    heldout,
                    ..
                } => {
                    let scorer = scorer
                        .as_deref()
                        .map(ScorerConfig::parse_flag)
                        .transpose()
                        .map_err(CliError::Usage)?;
                    if *heldout {
                        p.cmd_heldout(*pool)
                    } else {
                        p.cmd_eval(&pipeline::EvalRequest {
                            scenarios: scenarios.clone(),
                            template: template.clone(),
                            pool: *pool,
                            scorer,
                            record: record.clone(),
                            out: out.clone(),
                        })
                    }
                }
                Command::ServeFixture { .. } => unreachable!("handled above"),
            }
        }
    }
}

/// Binary entry point: 0 on success, 1 on errors, 2 on usage errors, 3
/// when artifacts were written but an evaluation was invalid or a corpus
/// partial.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("recprompt=info")).init();
    match run(std::env::args_os()) {
        Ok(o) => {
            let report = o.report.trim_end();
            if !report.is_empty() {
                println!("{report}");
            }
            for a in &o.artifacts {
                println!("{}", a.display());
            }
            if o.degraded {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("{}", msg.trim_end());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
