//! `cts`: generate, discover, sample, train and evaluate from the shell.
//!
//! Values come from built-in defaults, then the `--config` file, then flags
//! given on the command line. The merged config is written into the run
//! directory, and re-running from that file reproduces the run.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use cts_core::forecast::ModelKind;
use cts_core::graph::LagCorrection;

use crate::config::{DiscoverSection, GenerateSection, RunConfig, SamplesSection, TrainSection};
use crate::error::{CliError, Result};

#[derive(Parser, Debug)]
#[command(name = "cts", version, about = "Lagged causal discovery and cause-effect synchronized forecasting")]
struct Cli {
    /// TOML run configuration; flags given on the command line override it [default: none]
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Artifacts go to <outdir>/<run-id>/
    #[arg(long, global = true, default_value = "runs")]
    outdir: PathBuf,

    /// Root seed for generation and training
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads [default: available parallelism]
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a random lagged structure and simulate it (data.csv, spec.json)
    Generate(GenerateArgs),
    /// Lagged Granger scan of every variable pair (scans.json, graph.json, graph.nt)
    Discover(DiscoverArgs),
    /// List the cause-effect pairs of a graph with their window counts (pairs.json)
    Pairs(PairsArgs),
    /// Cut synchronized and non-synchronized windows for every pair (samples/)
    BuildSamples(SamplesArgs),
    /// Fit a forecaster on the pooled training windows (model.json, training.json)
    Train(TrainArgs),
    /// Test-set MAPE of a saved model (evaluation.json)
    Evaluate(EvaluateArgs),
    /// Synchronized vs non-synchronized training on generated datasets (exp1.json, exp1.txt)
    Exp1(Exp1Args),
    /// Source pre-training then target fine-tuning (exp2.json, exp2.txt)
    Exp2(Exp2Args),
    /// Rewrite a graph document as JSON and N-Triples (graph.json, graph.nt)
    ExportGraph(ExportGraphArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Discover(_) => "discover",
            Command::Pairs(_) => "pairs",
            Command::BuildSamples(_) => "build-samples",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Exp1(_) => "exp1",
            Command::Exp2(_) => "exp2",
            Command::ExportGraph(_) => "export-graph",
        }
    }
}

fn given(m: &ArgMatches, id: &str) -> bool {
    m.value_source(id) == Some(ValueSource::CommandLine)
}

/// Copies every flag that was typed on the command line into the config.
macro_rules! overlay {
    ($m:expr; $($id:ident => $dst:expr),* $(,)?) => {
        $(
            if given($m, stringify!($id)) {
                $dst = $id.clone().into();
            }
        )*
    };
}

fn parse_correction(s: &str) -> std::result::Result<LagCorrection, String> {
    match s {
        "none" => Ok(LagCorrection::None),
        "bonferroni" => Ok(LagCorrection::Bonferroni),
        other => Err(format!("unknown correction `{other}` (expected none or bonferroni)")),
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Number of variables
    #[arg(long, default_value_t = GenerateSection::default().vars)]
    vars: usize,
    /// Time steps to emit
    #[arg(long, default_value_t = GenerateSection::default().steps)]
    steps: usize,
    /// Largest cross-edge lag
    #[arg(long, default_value_t = GenerateSection::default().max_lag)]
    max_lag: usize,
    /// Number of cross-variable edges
    #[arg(long, default_value_t = GenerateSection::default().cross_edges)]
    cross_edges: usize,
    #[arg(long, default_value_t = GenerateSection::default().coeff_min)]
    coeff_min: f64,
    #[arg(long, default_value_t = GenerateSection::default().coeff_max)]
    coeff_max: f64,
    /// Lower self-edge magnitude [default: coeff-min]
    #[arg(long)]
    self_coeff_min: Option<f64>,
    /// Upper self-edge magnitude [default: coeff-max]
    #[arg(long)]
    self_coeff_max: Option<f64>,
    #[arg(long, default_value_t = GenerateSection::default().noise_std)]
    noise_std: f64,
}

impl GenerateArgs {
    fn apply(&self, m: &ArgMatches, cfg: &mut RunConfig) {
        let Self {
            vars,
            steps,
            max_lag,
            cross_edges,
            coeff_min,
            coeff_max,
            self_coeff_min,
            self_coeff_max,
            noise_std,
        } = self;
        let g = &mut cfg.generate;
        overlay!(m;
            vars => g.vars,
            steps => g.steps,
            max_lag => g.max_lag,
            cross_edges => g.cross_edges,
            coeff_min => g.coeff_min,
            coeff_max => g.coeff_max,
            self_coeff_min => g.self_coeff_min,
            self_coeff_max => g.self_coeff_max,
            noise_std => g.noise_std,
        );
    }
}

#[derive(Args, Debug)]
struct DiscoverArgs {
    /// Dataset CSV [default: none]
    #[arg(long)]
    data: Option<PathBuf>,
    /// Largest lag scanned
    #[arg(long, default_value_t = DiscoverSection::default().max_lag)]
    max_lag: usize,
    /// Own lags in the restricted model
    #[arg(long, default_value_t = DiscoverSection::default().ar_order)]
    ar_order: usize,
    /// Significance level for graph edges
    #[arg(long, default_value_t = DiscoverSection::default().alpha)]
    alpha: f64,
    /// Multiple-lag correction: none or bonferroni
    #[arg(long, default_value = "bonferroni", value_parser = parse_correction)]
    correction: LagCorrection,
    /// Export the p-value of every scanned lag [default: false]
    #[arg(long)]
    curves: bool,
}

impl DiscoverArgs {
    fn apply(&self, m: &ArgMatches, cfg: &mut RunConfig) {
        let Self {
            data,
            max_lag,
            ar_order,
            alpha,
            correction,
            curves,
        } = self;
        let d = &mut cfg.discover;
        overlay!(m;
            data => cfg.inputs.data,
            max_lag => d.max_lag,
            ar_order => d.ar_order,
            alpha => d.alpha,
            correction => d.correction,
            curves => d.curves,
        );
    }
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Dataset CSV [default: none]
    #[arg(long)]
    data: Option<PathBuf>,
    /// Graph document from `discover` [default: none]
    #[arg(long)]
    graph: Option<PathBuf>,
}

impl InputArgs {
    fn apply(&self, m: &ArgMatches, cfg: &mut RunConfig) {
        let Self { data, graph } = self;
        overlay!(m; data => cfg.inputs.data, graph => cfg.inputs.graph);
    }
}

#[derive(Args, Debug)]
struct WindowArgs {
    /// Context length C
    #[arg(long, default_value_t = SamplesSection::default().context)]
    context: usize,
    /// Forecast horizon H
    #[arg(long, default_value_t = SamplesSection::default().horizon)]
    horizon: usize,
    /// Step between window anchors
    #[arg(long, default_value_t = SamplesSection::default().stride)]
    stride: usize,
    /// Channel range at or below which a window channel is degenerate
    #[arg(long, default_value_t = SamplesSection::default().scale_eps)]
    scale_eps: f64,
}

impl WindowArgs {
    fn apply(&self, m: &ArgMatches, cfg: &mut RunConfig) {
        let Self {
            context,
            horizon,
            stride,
            scale_eps,
        } = self;
        let s = &mut cfg.samples;
        overlay!(m;
            context => s.context,
            horizon => s.horizon,
            stride => s.stride,
            scale_eps => s.scale_eps,
        );
    }
}

#[derive(Args, Debug)]
struct PairsArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Args, Debug)]
struct SamplesArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    window: WindowArgs,
    /// naive, ridge or mlp
    #[arg(long, default_value_t = TrainSection::default().model)]
    model: ModelKind,
    /// Use synchronized pairs (false: non-synchronized)
    #[arg(long, default_value_t = TrainSection::default().synchronized, action = ArgAction::Set)]
    synchronized: bool,
    #[arg(long, default_value_t = TrainSection::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainSection::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainSection::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = TrainSection::default().ridge_lambda)]
    ridge_lambda: f64,
    #[arg(long, default_value_t = TrainSection::default().hidden_units)]
    hidden_units: usize,
}

impl TrainArgs {
    fn apply(&self, m: &ArgMatches, cfg: &mut RunConfig) {
        self.inputs.apply(m, cfg);
        self.window.apply(m, cfg);
        let Self {
            model,
            synchronized,
            epochs,
            batch_size,
            learning_rate,
            ridge_lambda,
            hidden_units,
            ..
        } = self;
        let t = &mut cfg.train;
        overlay!(m;
            model => t.model,
            synchronized => t.synchronized,
            epochs => t.epochs,
            batch_size => t.batch_size,
            learning_rate => t.learning_rate,
            ridge_lambda => t.ridge_lambda,
            hidden_units => t.hidden_units,
        );
    }
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    window: WindowArgs,
    /// Model checkpoint from `train` [default: none]
    #[arg(long)]
    model: Option<PathBuf>,
    /// Use synchronized pairs (false: non-synchronized)
    #[arg(long, default_value_t = TrainSection::default().synchronized, action = ArgAction::Set)]
    synchronized: bool,
    /// Denominator floor of the MAPE
    #[arg(long, default_value_t = TrainSection::default().mape_floor)]
    mape_floor: f64,
}

impl EvaluateArgs {
    fn apply(&self, m: &ArgMatches, cfg: &mut RunConfig) {
        self.inputs.apply(m, cfg);
        self.window.apply(m, cfg);
        let Self {
            model,
            synchronized,
            mape_floor,
            ..
        } = self;
        overlay!(m;
            model => cfg.inputs.model,
            synchronized => cfg.train.synchronized,
            mape_floor => cfg.train.mape_floor,
        );
    }
}

#[derive(Args, Debug)]
struct Exp1Args {
    /// Datasets per seed
    #[arg(long, default_value_t = cts_core::eval::Exp1Config::default().n_datasets)]
    n_datasets: usize,
    /// Time steps per dataset
    #[arg(long, default_value_t = cts_core::eval::Exp1Config::default().steps)]
    steps: usize,
    /// Comma-separated seeds
    #[arg(long, value_delimiter = ',', default_values_t = cts_core::eval::Exp1Config::default().seeds)]
    seeds: Vec<u64>,
    /// Comma-separated model kinds
    #[arg(long, value_delimiter = ',', default_values_t = cts_core::eval::Exp1Config::default().models)]
    models: Vec<ModelKind>,
    #[arg(long, default_value_t = cts_core::eval::Exp1Config::default().train.epochs)]
    epochs: usize,
    #[arg(long, default_value_t = cts_core::eval::Exp1Config::default().horizon)]
    horizon: usize,
    #[arg(long, default_value_t = cts_core::eval::Exp1Config::default().context)]
    context: usize,
    #[arg(long, default_value_t = cts_core::eval::Exp1Config::default().alpha)]
    alpha: f64,
}

impl Exp1Args {
    fn apply(&self, m: &ArgMatches, cfg: &mut RunConfig) {
        let Self {
            n_datasets,
            steps,
            seeds,
            models,
            epochs,
            horizon,
            context,
            alpha,
        } = self;
        let e = &mut cfg.exp1;
        overlay!(m;
            n_datasets => e.n_datasets,
            steps => e.steps,
            seeds => e.seeds,
            models => e.models,
            epochs => e.train.epochs,
            horizon => e.horizon,
            context => e.context,
            alpha => e.alpha,
        );
    }
}

#[derive(Args, Debug)]
struct Exp2Args {
    /// Source datasets per seed
    #[arg(long, default_value_t = cts_core::eval::Exp2Config::default().n_sources)]
    n_sources: usize,
    #[arg(long, default_value_t = cts_core::eval::Exp2Config::default().source_steps)]
    source_steps: usize,
    #[arg(long, default_value_t = cts_core::eval::Exp2Config::default().target_steps)]
    target_steps: usize,
    /// Comma-separated seeds
    #[arg(long, value_delimiter = ',', default_values_t = cts_core::eval::Exp2Config::default().seeds)]
    seeds: Vec<u64>,
    /// Comma-separated model kinds
    #[arg(long, value_delimiter = ',', default_values_t = cts_core::eval::Exp2Config::default().models)]
    models: Vec<ModelKind>,
    #[arg(long, default_value_t = cts_core::eval::Exp2Config::default().train.epochs)]
    epochs: usize,
    #[arg(long, default_value_t = cts_core::eval::Exp2Config::default().horizon)]
    horizon: usize,
    #[arg(long, default_value_t = cts_core::eval::Exp2Config::default().context)]
    context: usize,
}

impl Exp2Args {
    fn apply(&self, m: &ArgMatches, cfg: &mut RunConfig) {
        let Self {
            n_sources,
            source_steps,
            target_steps,
            seeds,
            models,
            epochs,
            horizon,
            context,
        } = self;
        let e = &mut cfg.exp2;
        overlay!(m;
            n_sources => e.n_sources,
            source_steps => e.source_steps,
            target_steps => e.target_steps,
            seeds => e.seeds,
            models => e.models,
            epochs => e.train.epochs,
            horizon => e.horizon,
            context => e.context,
        );
    }
}

#[derive(Args, Debug)]
struct ExportGraphArgs {
    /// Graph document to convert [default: none]
    #[arg(long)]
    graph: Option<PathBuf>,
}

impl ExportGraphArgs {
    fn apply(&self, m: &ArgMatches, cfg: &mut RunConfig) {
        let Self { graph } = self;
        overlay!(m; graph => cfg.inputs.graph);
    }
}

fn effective_config(cli: &Cli, top: &ArgMatches, sub: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    // global flags may sit before or after the subcommand
    let global = |id: &str| given(top, id) || given(sub, id);
    if global("outdir") {
        cfg.outdir = cli.outdir.clone();
    }
    if global("seed") {
        cfg.seed = cli.seed;
    }
    match &cli.command {
        Command::Generate(a) => a.apply(sub, &mut cfg),
        Command::Discover(a) => a.apply(sub, &mut cfg),
        Command::Pairs(a) => {
            a.inputs.apply(sub, &mut cfg);
            a.window.apply(sub, &mut cfg);
        }
        Command::BuildSamples(a) => {
            a.inputs.apply(sub, &mut cfg);
            a.window.apply(sub, &mut cfg);
        }
        Command::Train(a) => a.apply(sub, &mut cfg),
        Command::Evaluate(a) => a.apply(sub, &mut cfg),
        Command::Exp1(a) => a.apply(sub, &mut cfg),
        Command::Exp2(a) => a.apply(sub, &mut cfg),
        Command::ExportGraph(a) => a.apply(sub, &mut cfg),
    }
    Ok(cfg)
}

fn run(cli: &Cli, top: &ArgMatches) -> Result<()> {
    let command = cli.command.name();
    let sub = top
        .subcommand_matches(command)
        .ok_or_else(|| CliError::invalid("command", "missing subcommand matches"))?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::invalid("jobs", "must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::invalid("jobs", e.to_string()))?;
    }
    let cfg = effective_config(cli, top, sub)?;
    commands::validate(command, &cfg)?;
    let dir = cfg.outdir.join(cfg.run_id(command)?);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    commands::write(&dir.join(config::CONFIG_FILE), cfg.to_toml()?)?;
    log::info!("{command}: writing to {}", dir.display());
    commands::run(command, &cfg, &dir)?;
    println!("{}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            // help and version are not errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(&cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
