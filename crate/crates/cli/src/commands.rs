//! One function per subcommand. Each reads its inputs from the config and
//! writes its artifacts into the run directory.

use std::path::{Path, PathBuf};

use serde::Serialize;

use cts_core::eval::{self, pool_partitions, run_experiment1, run_experiment2, Partitions};
use cts_core::forecast::{self, ForecastModel, ModelKind};
use cts_core::granger::{scan_all, scan_records, ScanConfig};
use cts_core::graph::{build_graph, enumerate_pairs, CausalGraph, CauseEffectPair};
use cts_core::rng::Seed;
use cts_core::sampler::{build_samples, build_samples_nonsync, SampleSet};
use cts_core::synthgen::{generate, sample_spec, stabilize};
use cts_core::{TimeSeriesMatrix, WindowSpec};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text)
}

fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| CliError::invalid(format!("inputs.{key}"), format!("required (pass --{key})")))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load_graph(cfg: &RunConfig) -> Result<CausalGraph> {
    let path = require(&cfg.inputs.graph, "graph")?;
    Ok(CausalGraph::import_json(&read_text(path)?)?)
}

fn load_data(cfg: &RunConfig) -> Result<TimeSeriesMatrix> {
    Ok(TimeSeriesMatrix::load_csv(require(&cfg.inputs.data, "data")?)?)
}

/// Checks everything that can be checked before any file is written.
pub fn validate(command: &str, cfg: &RunConfig) -> Result<()> {
    match command {
        "generate" => {
            cfg.generate.params()?;
        }
        "discover" => {
            require(&cfg.inputs.data, "data")?;
            if !(cfg.discover.alpha > 0.0 && cfg.discover.alpha < 1.0) {
                return Err(CliError::invalid("discover.alpha", "must lie in (0, 1)"));
            }
        }
        "pairs" | "build-samples" | "train" | "evaluate" => {
            require(&cfg.inputs.data, "data")?;
            require(&cfg.inputs.graph, "graph")?;
            cfg.samples.window()?;
            if command == "train" {
                cfg.train.config(cfg.seed).validate()?;
            }
            if command == "evaluate" {
                require(&cfg.inputs.model, "model")?;
            }
        }
        "exp1" => cfg.exp1.validate()?,
        "exp2" => cfg.exp2.validate()?,
        "export-graph" => {
            require(&cfg.inputs.graph, "graph")?;
        }
        other => return Err(CliError::invalid("command", format!("unknown command `{other}`"))),
    }
    Ok(())
}

pub fn run(command: &str, cfg: &RunConfig, dir: &Path) -> Result<()> {
    match command {
        "generate" => cmd_generate(cfg, dir),
        "discover" => cmd_discover(cfg, dir),
        "pairs" => cmd_pairs(cfg, dir),
        "build-samples" => cmd_build_samples(cfg, dir),
        "train" => cmd_train(cfg, dir),
        "evaluate" => cmd_evaluate(cfg, dir),
        "exp1" => cmd_exp1(cfg, dir),
        "exp2" => cmd_exp2(cfg, dir),
        "export-graph" => cmd_export_graph(cfg, dir),
        other => Err(CliError::invalid("command", format!("unknown command `{other}`"))),
    }
}

fn cmd_generate(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let root = Seed(cfg.seed).named("generate", 0);
    let spec = stabilize(&sample_spec(&cfg.generate.params()?, root.child(1))?);
    let data = generate(&spec, cfg.generate.steps, root.child(2))?;
    data.save_csv(dir.join("data.csv"))?;
    spec.save(dir.join("spec.json"))?;
    log::info!("generated {} steps of {}", data.n_steps(), spec.label());
    Ok(())
}

fn write_graph(graph: &CausalGraph, dir: &Path) -> Result<()> {
    let mut json = graph.export_json()?;
    json.push('\n');
    write(&dir.join("graph.json"), json)?;
    write(&dir.join("graph.nt"), graph.export_ntriples())
}

fn cmd_discover(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    let d = &cfg.discover;
    let scans = scan_all(
        &data,
        &ScanConfig {
            max_lag: d.max_lag,
            ar_order: d.ar_order,
        },
    )?;
    let graph = build_graph(&scans, data.names(), d.alpha, d.correction)?;
    write_json(&dir.join("scans.json"), &scan_records(&scans, data.names(), d.curves))?;
    write_graph(&graph, dir)?;
    log::info!("{} edges over {} scanned pairs", graph.edges.len(), scans.len());
    Ok(())
}

#[derive(Serialize)]
struct PairRow {
    cause: String,
    effect: String,
    lag: usize,
    windows_sync: usize,
    windows_nonsync: usize,
}

fn cmd_pairs(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    let graph = load_graph(cfg)?;
    let window = cfg.samples.window()?;
    let rows: Vec<PairRow> = enumerate_pairs(&graph, &data)?
        .iter()
        .map(|p| PairRow {
            cause: p.cause_name.to_string(),
            effect: p.effect_name.to_string(),
            lag: p.lag,
            windows_sync: window.count(data.n_steps(), p.lag),
            windows_nonsync: window.count(data.n_steps(), 0),
        })
        .collect();
    write_json(&dir.join("pairs.json"), &rows)
}

/// Sample sets of one variant, skipping pairs too short for a window.
fn sample_sets(pairs: &[CauseEffectPair<'_>], window: &WindowSpec, synchronized: bool) -> Result<Vec<SampleSet>> {
    let mut out = Vec::new();
    for pair in pairs {
        let set = if synchronized {
            build_samples(pair, window)
        } else {
            build_samples_nonsync(pair, window)
        };
        match set {
            Ok(s) => out.push(s),
            Err(cts_core::Error::Insufficient(msg)) => {
                log::warn!("pair {} -> {} skipped: {msg}", pair.cause_name, pair.effect_name);
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct SampleFile {
    file: String,
    cause: String,
    effect: String,
    lag: usize,
    synchronized: bool,
    windows: usize,
}

fn cmd_build_samples(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    let graph = load_graph(cfg)?;
    let window = cfg.samples.window()?;
    let pairs = enumerate_pairs(&graph, &data)?;
    let out = dir.join("samples");
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let dataset = cfg
        .inputs
        .data
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default();
    let mut index = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        for synchronized in [true, false] {
            for set in sample_sets(std::slice::from_ref(pair), &window, synchronized)? {
                let file = format!("pair{i:03}_{}.jsonl", if synchronized { "sync" } else { "nonsync" });
                let set = set.with_dataset(dataset.clone());
                let mut buf = Vec::new();
                set.write_jsonl(&mut buf)?;
                write(&out.join(&file), buf)?;
                index.push(SampleFile {
                    file,
                    cause: pair.cause_name.to_string(),
                    effect: pair.effect_name.to_string(),
                    lag: pair.lag,
                    synchronized,
                    windows: set.len(),
                });
            }
        }
    }
    write_json(&out.join("index.json"), &index)
}

fn partitions(cfg: &RunConfig) -> Result<Partitions> {
    let data = load_data(cfg)?;
    let graph = load_graph(cfg)?;
    let window = cfg.samples.window()?;
    let pairs = enumerate_pairs(&graph, &data)?;
    let sets = sample_sets(&pairs, &window, cfg.train.synchronized)?;
    if sets.is_empty() {
        return Err(cts_core::Error::Insufficient("no pair of the graph yields windows".into()).into());
    }
    Ok(pool_partitions(&sets, &window, &cfg.samples.split, cfg.samples.scale_eps)?)
}

#[derive(Serialize)]
struct TrainingSummary {
    model: ModelKind,
    synchronized: bool,
    params: usize,
    windows_train: usize,
    windows_validation: usize,
    validation_mape: Option<f64>,
}

fn cmd_train(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let part = partitions(cfg)?;
    let model = forecast::train(cfg.train.model, &part.train, &part.val, &cfg.train.config(cfg.seed))?;
    model.save(&dir.join("model.json"))?;
    let validation_mape = if part.val.is_empty() {
        None
    } else {
        Some(eval::evaluate(&model, &part.val, cfg.train.mape_floor)?)
    };
    write_json(
        &dir.join("training.json"),
        &TrainingSummary {
            model: model.kind,
            synchronized: cfg.train.synchronized,
            params: model.params.len(),
            windows_train: part.train.len(),
            windows_validation: part.val.len(),
            validation_mape,
        },
    )
}

#[derive(Serialize)]
struct Evaluation {
    model: ModelKind,
    synchronized: bool,
    windows_test: usize,
    mape: f64,
    naive_mape: f64,
    mape_floor: f64,
}

fn cmd_evaluate(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let model = ForecastModel::load(require(&cfg.inputs.model, "model")?)?;
    let part = partitions(cfg)?;
    if model.input_dim != part.test.input_dim || model.output_dim != part.test.output_dim {
        return Err(CliError::invalid(
            "inputs.model",
            format!(
                "model maps {} inputs to {} outputs but the windows have {} and {}",
                model.input_dim, model.output_dim, part.test.input_dim, part.test.output_dim
            ),
        ));
    }
    let floor = cfg.train.mape_floor;
    let naive = ForecastModel::naive(part.test.input_dim, part.test.output_dim);
    write_json(
        &dir.join("evaluation.json"),
        &Evaluation {
            model: model.kind,
            synchronized: cfg.train.synchronized,
            windows_test: part.test.len(),
            mape: eval::evaluate(&model, &part.test, floor)?,
            naive_mape: eval::evaluate(&naive, &part.test, floor)?,
            mape_floor: floor,
        },
    )
}

fn cmd_exp1(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let report = run_experiment1(&cfg.exp1)?;
    let mut json = report.to_json()?;
    json.push('\n');
    write(&dir.join("exp1.json"), json)?;
    write(&dir.join("exp1.txt"), report.to_table())
}

fn cmd_exp2(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let report = run_experiment2(&cfg.exp2)?;
    let mut json = report.to_json()?;
    json.push('\n');
    write(&dir.join("exp2.json"), json)?;
    write(&dir.join("exp2.txt"), report.to_table())
}

fn cmd_export_graph(cfg: &RunConfig, dir: &Path) -> Result<()> {
    write_graph(&load_graph(cfg)?, dir)
}
