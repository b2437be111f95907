use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use jitlab::curation::{LabelStore, RuleCatalog};
use jitlab::eval::{Normalization, Scheme};
use jitlab::fixture::{demo_corpus, DemoOptions};
use jitlab::model::RedundancyScale;
use jitlab::pipeline::io::{read_ndjson, read_records, Format};
use jitlab::pipeline::{Pipeline, PipelineConfig, RunOptions, RunSummary, StageName};
use jitlab::szz::BugLinkage;
use jitlab::vcs::Miner;

use crate::api::{self, AppState, RepoDiffs};

pub const DEFAULT_CONFIG: &str = "jitlab.toml";

#[derive(Debug, Parser)]
#[command(name = "jitlab", version, about = "Change-level defect prediction laboratory")]
pub struct Cli {
    /// Pipeline config (TOML). Defaults to ./jitlab.toml when present.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// More logging (-v info, -vv debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Short,
    Long,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormalizationArg {
    FamilySum,
    JointTotal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScaleArg {
    Rank,
    Raw,
}

#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub repo: Option<PathBuf>,
    #[arg(long, global = true)]
    pub branch: Option<String>,
    #[arg(long, global = true)]
    pub issues: Option<PathBuf>,
    #[arg(long, global = true)]
    pub reviews: Option<PathBuf>,
    #[arg(long, global = true)]
    pub labels: Option<PathBuf>,
    #[arg(long, global = true)]
    pub suspicious: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Issue-id pattern; repeat for several. Replaces the configured list.
    #[arg(long = "pattern", global = true)]
    pub patterns: Vec<String>,
    #[arg(long, global = true)]
    pub no_cosmetic_filter: bool,
    #[arg(long, global = true)]
    pub no_date_filter: bool,
    #[arg(long, global = true)]
    pub churn_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub files_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub drop_mislabeled: bool,
    #[arg(long, global = true)]
    pub months: Option<u32>,
    #[arg(long = "scheme", value_enum, global = true)]
    pub schemes: Vec<SchemeArg>,
    #[arg(long, global = true)]
    pub collinearity_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub redundancy_threshold: Option<f64>,
    #[arg(long, value_enum, global = true)]
    pub redundancy_scale: Option<ScaleArg>,
    #[arg(long, global = true)]
    pub spline_df: Option<usize>,
    #[arg(long, value_enum, global = true)]
    pub normalization: Option<NormalizationArg>,
    #[arg(long, global = true)]
    pub recency_unit_days: Option<f64>,
    #[arg(long, global = true)]
    pub wilcoxon_exact_max: Option<usize>,
    #[arg(long, global = true)]
    pub density_points: Option<usize>,
    /// Recompute the requested stage (and what depends on it) even if cached.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Walk the repository and record commits with file deltas.
    Mine,
    /// Link issues to bug-fixing commits.
    Link,
    /// Trace bug-introducing candidates and apply the SZZ filters.
    Szz,
    /// Compute change metrics.
    Metrics,
    /// Apply the filtering ledger.
    Filter,
    /// Assign changes to periods.
    Stratify,
    /// Fit one model per training period and scheme.
    Train,
    /// Score models on later periods.
    Evaluate,
    /// Family importance of each model.
    Importance,
    /// Importance differences between periods.
    Stability,
    /// Distribution tests across verdict groups.
    Stats,
    /// Run every stage, reusing cached ones.
    Run {
        /// Recompute this stage and everything downstream.
        #[arg(long)]
        from: Option<String>,
    },
    /// Label store operations.
    Label {
        #[command(subcommand)]
        command: LabelCommand,
    },
    /// Write a small deterministic demo corpus and its config.
    Demo {
        dir: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Print the effective configuration.
    Config,
}

#[derive(Debug, Subcommand)]
pub enum LabelCommand {
    /// Import labels from CSV or newline-JSON.
    Import { file: PathBuf },
    /// Export current labels as newline-JSON.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the curation API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<jitlab::Error> for CliError {
    fn from(e: jitlab::Error) -> Self {
        let msg = error_chain(&e);
        match &e {
            jitlab::Error::Config(_) => CliError::Usage(msg),
            _ if e.is_data_error() => CliError::Data(msg),
            _ => CliError::Internal(msg),
        }
    }
}

fn error_chain(e: &dyn std::error::Error) -> String {
    let mut msg = e.to_string();
    let mut source = e.source();
    while let Some(s) = source {
        let text = s.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
        source = s.source();
    }
    msg
}

type CliResult<T> = Result<T, CliError>;

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Loads the config (explicit path, ./jitlab.toml, or defaults) and applies
/// the flag overrides.
pub fn effective_config(cli: &Cli) -> CliResult<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None if Path::new(DEFAULT_CONFIG).is_file() => PipelineConfig::load(Path::new(DEFAULT_CONFIG))?,
        None => PipelineConfig::default(),
    };
    let o = &cli.overrides;
    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = &o.$field {
                config.$field = v.clone();
            }
        };
    }
    set!(repo);
    set!(branch);
    set!(issues);
    set!(output);
    set!(churn_threshold);
    set!(files_threshold);
    set!(months);
    set!(collinearity_threshold);
    set!(redundancy_threshold);
    set!(spline_df);
    set!(recency_unit_days);
    set!(wilcoxon_exact_max);
    set!(density_points);
    for (slot, value) in [
        (&mut config.reviews, &o.reviews),
        (&mut config.labels, &o.labels),
        (&mut config.suspicious, &o.suspicious),
    ] {
        if value.is_some() {
            *slot = value.clone();
        }
    }
    if !o.patterns.is_empty() {
        config.patterns = o.patterns.clone();
    }
    if o.no_cosmetic_filter {
        config.cosmetic_filter = false;
    }
    if o.no_date_filter {
        config.date_filter = false;
    }
    if o.drop_mislabeled {
        config.drop_mislabeled = true;
    }
    if !o.schemes.is_empty() {
        config.schemes = o
            .schemes
            .iter()
            .map(|s| match s {
                SchemeArg::Short => Scheme::Short,
                SchemeArg::Long => Scheme::Long,
            })
            .collect();
        config.schemes.dedup();
    }
    if let Some(n) = o.normalization {
        config.normalization = match n {
            NormalizationArg::FamilySum => Normalization::FamilySum,
            NormalizationArg::JointTotal => Normalization::JointTotal,
        };
    }
    if let Some(s) = o.redundancy_scale {
        config.redundancy_scale = match s {
            ScaleArg::Rank => RedundancyScale::Rank,
            ScaleArg::Raw => RedundancyScale::Raw,
        };
    }
    config.validate()?;
    Ok(config)
}

fn report(summary: &RunSummary, out: &mut dyn Write) -> io::Result<()> {
    for record in &summary.manifest.stages {
        let state = if summary.executed.contains(&record.stage) {
            "ran"
        } else if summary.reused.contains(&record.stage) {
            "cached"
        } else {
            continue;
        };
        writeln!(out, "{:<10} {:<6} {}", record.stage, state, record.outputs.join(" "))?;
    }
    writeln!(out, "run {} -> {}", summary.manifest.run_id, summary.manifest.config.output.display())
}

fn run_stages(config: PipelineConfig, options: RunOptions, out: &mut dyn Write) -> CliResult<()> {
    let mut pipeline = Pipeline::new(config)?;
    let summary = pipeline.run(&options)?;
    report(&summary, out).map_err(|e| CliError::Internal(e.to_string()))
}

fn stage_of(command: &Command) -> Option<StageName> {
    Some(match command {
        Command::Mine => StageName::Mine,
        Command::Link => StageName::Link,
        Command::Szz => StageName::Szz,
        Command::Metrics => StageName::Metrics,
        Command::Filter => StageName::Filter,
        Command::Stratify => StageName::Stratify,
        Command::Train => StageName::Fit,
        Command::Evaluate => StageName::Evaluate,
        Command::Importance => StageName::Importance,
        Command::Stability => StageName::Stability,
        Command::Stats => StageName::Stats,
        _ => return None,
    })
}

fn open_store(config: &PipelineConfig) -> CliResult<LabelStore> {
    let path = config
        .labels
        .as_ref()
        .ok_or_else(|| CliError::Usage("no label store configured (set `labels` or --labels)".into()))?;
    if Format::of(path)? != Format::NdJson {
        return Err(CliError::Usage(format!(
            "label store {} must be newline-JSON (.ndjson/.jsonl)",
            path.display()
        )));
    }
    let issues = read_records(&config.issues)?;
    Ok(LabelStore::open(path, issues, RuleCatalog::standard())?)
}

fn label(config: PipelineConfig, command: &LabelCommand, out: &mut dyn Write) -> CliResult<()> {
    match command {
        LabelCommand::Import { file } => {
            let mut store = open_store(&config)?;
            let csv = Format::of(file)? == Format::Csv;
            let input = File::open(file).map_err(|e| io_err(file, e))?;
            let n = store.import(input, csv)?;
            writeln!(out, "imported {n} labels").map_err(|e| CliError::Internal(e.to_string()))?;
        }
        LabelCommand::Export { out: target } => {
            let store = open_store(&config)?;
            match target {
                Some(path) => {
                    let file = File::create(path).map_err(|e| io_err(path, e))?;
                    let n = store.export(io::BufWriter::new(file))?;
                    log::info!("exported {n} labels to {}", path.display());
                }
                None => {
                    store.export(&mut *out)?;
                }
            }
        }
        LabelCommand::Serve { bind } => {
            let store = open_store(&config)?;
            let mut pipeline = Pipeline::new(config.clone())?;
            pipeline.run(&RunOptions {
                until: Some(StageName::Link),
                ..Default::default()
            })?;
            let linkages: Vec<BugLinkage> = read_ndjson(&pipeline.path("linkages.ndjson"))?;
            let miner = Miner::open(&config.repo)?;
            let state = AppState::new(store, Box::new(RepoDiffs::new(miner, &linkages)));
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
            runtime
                .block_on(api::serve(state, bind))
                .map_err(|e| CliError::Data(format!("cannot serve on {bind}: {e}")))?;
        }
    }
    Ok(())
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    if let Command::Demo { dir, seed } = &cli.command {
        let options = DemoOptions {
            seed: *seed,
            ..Default::default()
        };
        let corpus = demo_corpus(dir, &options)?;
        let mut config = corpus.config.clone();
        config.repo = "repo".into();
        config.issues = "issues.csv".into();
        config.reviews = Some("reviews.csv".into());
        config.labels = Some("labels.ndjson".into());
        config.output = "out".into();
        let path = dir.join(DEFAULT_CONFIG);
        std::fs::write(&path, config.to_toml_string()?).map_err(|e| io_err(&path, e))?;
        writeln!(
            out,
            "demo corpus: {} commits, {} issues; config at {}",
            corpus.commits,
            corpus.issues.len(),
            path.display()
        )
        .map_err(|e| CliError::Internal(e.to_string()))?;
        return Ok(());
    }
    let config = effective_config(cli)?;
    match &cli.command {
        Command::Config => {
            out.write_all(config.to_toml_string()?.as_bytes())
                .map_err(|e| CliError::Internal(e.to_string()))?;
            Ok(())
        }
        Command::Run { from } => {
            let force_from = match from {
                Some(s) => Some(s.parse::<StageName>().map_err(|e| CliError::Usage(e.to_string()))?),
                None if cli.overrides.force => Some(StageName::Mine),
                None => None,
            };
            run_stages(
                config,
                RunOptions {
                    until: None,
                    force_from,
                },
                out,
            )
        }
        Command::Label { command } => label(config, command, out),
        command => {
            let stage = stage_of(command).expect("stage command");
            let options = RunOptions {
                until: Some(stage),
                force_from: cli.overrides.force.then_some(stage),
            };
            run_stages(config, options, out)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = write!(err, "{e}");
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("JITLAB_LOG")
        .try_init();
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| execute(&cli, out))) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
        Err(_) => {
            let _ = writeln!(err, "error: internal failure");
            3
        }
    }
}
