//! `censorfair`: simulate censored samples, fit scores, derive adjusted
//! policies, estimate reweighting and audit residual unfairness.

mod commands;
mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use censorfair::ErrorClass;
use clap::{Args, Parser, Subcommand};

use config::{CriterionArg, EvalMode, Partial, Scenario, Settings, WeightSource};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] censorfair::Error),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    fn csv(path: &Path, e: csv::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core(e) => match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Degenerate => 4,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "censorfair", version, about = "Audit decision policies learned from censored data")]
struct Cli {
    /// Random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file of settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for every output file.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic sample and its oracle quantities.
    Simulate(SimulateArgs),
    /// Fit a logistic score on the included rows.
    Fit(FitArgs),
    /// Derive an equal-opportunity or equalized-odds policy.
    Adjust(AdjustArgs),
    /// Benefit-of-the-doubt diagnostics, rates and plot data.
    Diagnose(DiagnoseArgs),
    /// Estimate reweighting toward the target population.
    Weights(WeightArgs),
    /// Print the JSON Schema of the report.
    Schema,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
    #[arg(long)]
    n: Option<usize>,
    /// Censoring feature of the quantile scenario.
    #[arg(long)]
    feature: Option<String>,
    /// Censored lower quantile of the quantile scenario.
    #[arg(long)]
    quantile: Option<f64>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Sample CSV with columns `x_*`, `a`, `y`, `z` and optionally `t`.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Row-aligned CSV of scores.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    score_column: Option<String>,
    /// Fitted model JSON, used when no score file is given.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WeightSourceArgs {
    #[arg(long, value_enum)]
    weights: Option<WeightSource>,
    /// Oracle CSV with a `true_propensity` column.
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Laplace smoothing of density-ratio cells.
    #[arg(long)]
    alpha: Option<f64>,
    /// Clip cap of fitted weights.
    #[arg(long)]
    cap: Option<f64>,
    /// Quantile bins per covariate for density-ratio cells.
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// One coefficient vector per group.
    #[arg(long)]
    per_group: bool,
}

#[derive(Debug, Args)]
struct AdjustArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    scores: ScoreArgs,
    #[command(flatten)]
    weights: WeightSourceArgs,
    #[arg(long, value_enum)]
    criterion: Option<CriterionArg>,
    #[arg(long, value_enum)]
    eval: Option<EvalMode>,
    /// Fixed common true positive rate for equal opportunity.
    #[arg(long)]
    rho: Option<f64>,
    /// Cost of a false negative in false positives.
    #[arg(long)]
    fn_fp_rate: Option<f64>,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    scores: ScoreArgs,
    #[command(flatten)]
    weights: WeightSourceArgs,
    /// Policy JSON to audit.
    #[arg(long)]
    policy: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WeightArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    weights: WeightSourceArgs,
}

impl ScoreArgs {
    fn fill(&self, p: &mut Partial) {
        p.scores = self.scores.clone();
        p.score_column = self.score_column.clone();
        p.model = self.model.clone();
    }
}

impl WeightSourceArgs {
    fn fill(&self, p: &mut Partial) {
        p.weights = self.weights;
        p.oracle = self.oracle.clone();
        p.alpha = self.alpha;
        p.cap = self.cap;
        p.bins = self.bins;
    }
}

fn flags(cli: &Cli) -> Partial {
    let mut p = Partial {
        seed: cli.seed,
        out_dir: cli.out_dir.clone(),
        ..Default::default()
    };
    match &cli.command {
        Command::Simulate(a) => {
            p.scenario = a.scenario;
            p.n = a.n;
            p.feature = a.feature.clone();
            p.quantile = a.quantile;
        }
        Command::Fit(a) => {
            p.data = a.data.data.clone();
            p.per_group = a.per_group.then_some(true);
        }
        Command::Adjust(a) => {
            p.data = a.data.data.clone();
            a.scores.fill(&mut p);
            a.weights.fill(&mut p);
            p.criterion = a.criterion;
            p.eval = a.eval;
            p.rho = a.rho;
            p.fn_fp_rate = a.fn_fp_rate;
        }
        Command::Diagnose(a) => {
            p.data = a.data.data.clone();
            a.scores.fill(&mut p);
            a.weights.fill(&mut p);
            p.policy = a.policy.clone();
        }
        Command::Weights(a) => {
            p.data = a.data.data.clone();
            a.weights.fill(&mut p);
        }
        Command::Schema => {}
    }
    p
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let settings = Settings::resolve(&flags(cli), cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(_) => commands::simulate(&settings),
        Command::Fit(_) => commands::fit(&settings),
        Command::Adjust(_) => commands::adjust(&settings),
        Command::Diagnose(_) => commands::diagnose(&settings),
        Command::Weights(_) => commands::weights(&settings),
        Command::Schema => {
            print!("{}", report::SCHEMA);
            Ok(Vec::new())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("censorfair: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
