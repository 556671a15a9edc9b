//! End-to-end runs: generate → discover → pair → sample → train → evaluate.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{
    DatasetModelResult, DatasetResult, Exp1Report, Exp2Report, Exp2Row, PairSummary, TransferVariant, EXP2_NOTE,
};
use super::{diff_pct, evaluate, DEFAULT_MAPE_FLOOR};
use crate::error::{Error, Result};
use crate::forecast::{
    pretrain_finetune, train, train_ridge, train_ridge_with_prior, FinetuneSchedule, ForecastModel, ModelKind,
    ScaledSet, TrainConfig,
};
use crate::granger::{scan_all, ScanConfig};
use crate::graph::{build_graph, enumerate_pairs, LagCorrection};
use crate::rng::Seed;
use crate::sampler::{build_samples, build_samples_nonsync, split, SampleSet, SplitRatios};
use crate::series::TimeSeriesMatrix;
use crate::synthgen::{generate, sample_spec, stabilize, CausalSpec, SpecParams};
use crate::window::WindowSpec;

fn default_models() -> Vec<ModelKind> {
    vec![ModelKind::Ridge, ModelKind::Mlp]
}

/// One cross edge into a strongly autoregressive system: the cause keeps
/// enough memory for its lagged window to still inform the horizon.
pub fn exp1_generator() -> SpecParams {
    SpecParams {
        cross_edges: 1,
        coeff_range: (0.2, 0.3),
        self_coeff_range: Some((0.6, 0.9)),
        ..SpecParams::default()
    }
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Exp1Config {
    pub n_datasets: usize,
    pub steps: usize,
    /// Structure of each dataset; `max_lag` also bounds the lag scan.
    pub generator: SpecParams,
    pub horizon: usize,
    pub context: usize,
    pub stride: usize,
    pub ar_order: usize,
    pub alpha: f64,
    pub correction: LagCorrection,
    /// Leading share of each series used for discovery.
    pub discovery_fraction: f64,
    pub models: Vec<ModelKind>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub split: SplitRatios,
    pub mape_floor: f64,
    /// Channel range at or below which a window channel is degenerate.
    pub scale_eps: f64,
}

impl Default for Exp1Config {
    fn default() -> Self {
        Self {
            n_datasets: 10,
            steps: 5000,
            generator: exp1_generator(),
            horizon: 10,
            context: 30,
            stride: 1,
            ar_order: 5,
            alpha: 0.01,
            correction: LagCorrection::default(),
            discovery_fraction: 0.7,
            models: default_models(),
            seeds: default_seeds(),
            train: TrainConfig::default(),
            split: SplitRatios::default(),
            mape_floor: DEFAULT_MAPE_FLOOR,
            scale_eps: 0.0,
        }
    }
}

/// Settings shared by every dataset of a run.
#[derive(Debug, Clone, Copy)]
struct Pipeline {
    window: WindowSpec,
    scan: ScanConfig,
    alpha: f64,
    correction: LagCorrection,
    discovery_fraction: f64,
    split: SplitRatios,
    scale_eps: f64,
}

fn check_common(models: &[ModelKind], seeds: &[u64], train: &TrainConfig, mape_floor: f64, fraction: f64) -> Result<()> {
    if models.is_empty() {
        return Err(Error::schema("models", "at least one model is required"));
    }
    if seeds.is_empty() {
        return Err(Error::schema("seeds", "at least one seed is required"));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(Error::schema("seeds", "seeds must be distinct"));
    }
    train.validate()?;
    if !(mape_floor.is_finite() && mape_floor > 0.0) {
        return Err(Error::schema("mape_floor", format!("must be positive, got {mape_floor}")));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::schema("discovery_fraction", format!("must lie in (0, 1], got {fraction}")));
    }
    Ok(())
}

impl Exp1Config {
    pub fn validate(&self) -> Result<()> {
        if self.n_datasets == 0 {
            return Err(Error::schema("n_datasets", "must be positive"));
        }
        check_common(&self.models, &self.seeds, &self.train, self.mape_floor, self.discovery_fraction)?;
        WindowSpec::new(self.context, self.horizon, self.stride)?;
        Ok(())
    }

    fn pipeline(&self) -> Result<Pipeline> {
        Ok(Pipeline {
            window: WindowSpec::new(self.context, self.horizon, self.stride)?,
            scan: ScanConfig {
                max_lag: self.generator.max_lag,
                ar_order: self.ar_order,
            },
            alpha: self.alpha,
            correction: self.correction,
            discovery_fraction: self.discovery_fraction,
            split: self.split,
            scale_eps: self.scale_eps,
        })
    }
}

/// Scaled train, validation and test samples of one variant, pooled over
/// every pair of a dataset.
#[derive(Debug, Clone)]
pub struct Partitions {
    pub train: ScaledSet,
    pub val: ScaledSet,
    pub test: ScaledSet,
}

struct Prepared {
    pairs: Vec<PairSummary>,
    sync: Partitions,
    nonsync: Partitions,
}

impl Prepared {
    fn variant(&self, synchronized: bool) -> &Partitions {
        if synchronized {
            &self.sync
        } else {
            &self.nonsync
        }
    }
}

/// Splits every set chronologically, scales each window, and concatenates
/// the partitions across sets.
pub fn pool_partitions(
    sets: &[SampleSet],
    window: &WindowSpec,
    ratios: &SplitRatios,
    scale_eps: f64,
) -> Result<Partitions> {
    let input_dim = crate::forecast::CHANNELS * window.context;
    let mut out = Partitions {
        train: ScaledSet::empty(input_dim, window.horizon),
        val: ScaledSet::empty(input_dim, window.horizon),
        test: ScaledSet::empty(input_dim, window.horizon),
    };
    for set in sets {
        if set.window != *window {
            return Err(Error::Invalid(format!(
                "sample set window {:?} differs from {:?}",
                set.window, window
            )));
        }
        let sp = split(set, ratios, window.purge_gap())?;
        out.train = ScaledSet::concat([&out.train, &ScaledSet::from_samples(&sp.train, scale_eps)?])?;
        out.val = ScaledSet::concat([&out.val, &ScaledSet::from_samples(&sp.validation, scale_eps)?])?;
        out.test = ScaledSet::concat([&out.test, &ScaledSet::from_samples(&sp.test, scale_eps)?])?;
    }
    Ok(out)
}

fn pool(sets: &[SampleSet], pipe: &Pipeline) -> Result<Partitions> {
    pool_partitions(sets, &pipe.window, &pipe.split, pipe.scale_eps)
}

/// Discovery on the leading span, then paired sample sets over the full
/// series. Returns `Err(reason)` inside `Ok` when the dataset has no usable
/// pairs.
fn prepare(spec: &CausalSpec, data: &TimeSeriesMatrix, pipe: &Pipeline) -> Result<std::result::Result<Prepared, String>> {
    let span = ((data.n_steps() as f64) * pipe.discovery_fraction).floor() as usize;
    let discovery = data.slice_steps(0..span)?;
    let scans = scan_all(&discovery, &pipe.scan)?;
    let graph = build_graph(&scans, data.names(), pipe.alpha, pipe.correction)?;
    if graph.edges.is_empty() {
        return Ok(Err("discovery found no edges".into()));
    }
    let mut pairs = Vec::new();
    let mut sync = Vec::new();
    let mut nonsync = Vec::new();
    for pair in enumerate_pairs(&graph, data)? {
        let s = build_samples(&pair, &pipe.window);
        let ns = build_samples_nonsync(&pair, &pipe.window);
        let (s, ns) = match (s, ns) {
            (Ok(s), Ok(ns)) => (s, ns),
            (Err(Error::Insufficient(msg)), _) | (_, Err(Error::Insufficient(msg))) => {
                log::warn!("pair {} -> {} dropped: {msg}", pair.cause_name, pair.effect_name);
                continue;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        let min_len = s.len().min(ns.len());
        let drop = pipe.window.purge_gap().div_ceil(pipe.window.stride);
        if min_len < 2 * drop + 10 {
            log::warn!("pair {} -> {} dropped: only {min_len} windows", pair.cause_name, pair.effect_name);
            continue;
        }
        pairs.push(PairSummary {
            cause: pair.cause_name.to_string(),
            effect: pair.effect_name.to_string(),
            lag: pair.lag,
            true_lag: spec
                .cross_edges()
                .find(|e| e.cause == pair.cause_index && e.effect == pair.effect_index)
                .map(|e| e.lag),
        });
        sync.push(s);
        nonsync.push(ns);
    }
    if pairs.is_empty() {
        return Ok(Err("no discovered pair leaves enough windows".into()));
    }
    Ok(Ok(Prepared {
        pairs,
        sync: pool(&sync, pipe)?,
        nonsync: pool(&nonsync, pipe)?,
    }))
}

fn model_seed(root: Seed, kind: ModelKind) -> Seed {
    root.named("train", kind as u64)
}

fn exp1_dataset(config: &Exp1Config, pipe: &Pipeline, seed: u64, dataset: usize) -> Result<DatasetResult> {
    let root = Seed(seed).named("exp1-dataset", dataset as u64);
    let spec = stabilize(&sample_spec(&config.generator, root.child(1))?);
    let data = generate(&spec, config.steps, root.child(2))?;
    let mut result = DatasetResult {
        seed,
        dataset,
        spec: spec.label(),
        pairs: Vec::new(),
        skipped: None,
        models: Vec::new(),
    };
    let prepared = match prepare(&spec, &data, pipe)? {
        Ok(p) => p,
        Err(reason) => {
            log::info!("seed {seed} dataset {dataset} skipped: {reason}");
            result.skipped = Some(reason);
            return Ok(result);
        }
    };
    for &kind in &config.models {
        let cfg = TrainConfig {
            seed: model_seed(root, kind),
            ..config.train
        };
        let mut mapes = [0.0; 2];
        let mut windows = [0; 2];
        for (slot, synchronized) in [false, true].into_iter().enumerate() {
            let part = prepared.variant(synchronized);
            let model = train(kind, &part.train, &part.val, &cfg)?;
            mapes[slot] = evaluate(&model, &part.test, config.mape_floor)?;
            windows[slot] = part.test.len();
        }
        log::info!(
            "seed {seed} dataset {dataset} {kind}: NS {:.4} S {:.4}",
            mapes[0],
            mapes[1]
        );
        result.models.push(DatasetModelResult {
            model: kind,
            mape_nonsync: mapes[0],
            mape_sync: mapes[1],
            diff_pct: diff_pct(mapes[0], mapes[1]),
            windows_nonsync: windows[0],
            windows_sync: windows[1],
        });
    }
    result.pairs = prepared.pairs;
    Ok(result)
}

/// Synchronized vs non-synchronized training on `n_datasets` generated
/// datasets per seed. Models of both variants share a training seed.
pub fn run_experiment1(config: &Exp1Config) -> Result<Exp1Report> {
    config.validate()?;
    let pipe = config.pipeline()?;
    let jobs: Vec<(u64, usize)> = config
        .seeds
        .iter()
        .flat_map(|&s| (0..config.n_datasets).map(move |d| (s, d)))
        .collect();
    let datasets = jobs
        .par_iter()
        .map(|&(seed, d)| exp1_dataset(config, &pipe, seed, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(Exp1Report::assemble(config, datasets))
}

/// Inclusive range of variable counts for source datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceVars {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Exp2Config {
    pub n_sources: usize,
    pub source_steps: usize,
    pub source_vars: SourceVars,
    /// Source structure; `n_vars` is replaced by a draw from `source_vars`.
    pub source_generator: SpecParams,
    pub source_stride: usize,
    pub target_steps: usize,
    pub target_generator: SpecParams,
    pub target_stride: usize,
    pub horizon: usize,
    pub context: usize,
    pub ar_order: usize,
    pub alpha: f64,
    pub correction: LagCorrection,
    pub discovery_fraction: f64,
    pub models: Vec<ModelKind>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub finetune: FinetuneSchedule,
    /// Strength pulling fine-tuned ridge weights toward the source fit.
    pub ridge_prior_lambda: f64,
    pub split: SplitRatios,
    pub mape_floor: f64,
    pub scale_eps: f64,
}

impl Default for Exp2Config {
    fn default() -> Self {
        Self {
            n_sources: 20,
            source_steps: 5000,
            source_vars: SourceVars { min: 3, max: 8 },
            source_generator: SpecParams::default(),
            source_stride: 5,
            target_steps: 1000,
            target_generator: SpecParams::default(),
            target_stride: 1,
            horizon: 10,
            context: 30,
            ar_order: 5,
            alpha: 0.01,
            correction: LagCorrection::default(),
            discovery_fraction: 0.7,
            models: vec![ModelKind::Mlp],
            seeds: default_seeds(),
            train: TrainConfig::default(),
            finetune: FinetuneSchedule::default(),
            ridge_prior_lambda: 10.0,
            split: SplitRatios::default(),
            mape_floor: DEFAULT_MAPE_FLOOR,
            scale_eps: 0.0,
        }
    }
}

impl Exp2Config {
    pub fn validate(&self) -> Result<()> {
        check_common(&self.models, &self.seeds, &self.train, self.mape_floor, self.discovery_fraction)?;
        WindowSpec::new(self.context, self.horizon, self.source_stride)?;
        WindowSpec::new(self.context, self.horizon, self.target_stride)?;
        if self.source_vars.min < 2 || self.source_vars.min > self.source_vars.max {
            return Err(Error::schema(
                "source_vars",
                format!("need 2 <= min <= max, got {:?}", self.source_vars),
            ));
        }
        let pairs = self.source_vars.min * (self.source_vars.min - 1);
        if self.source_generator.cross_edges > pairs {
            return Err(Error::schema(
                "source_generator.cross_edges",
                format!("{} cross edges do not fit {} variables", self.source_generator.cross_edges, self.source_vars.min),
            ));
        }
        if !(self.ridge_prior_lambda.is_finite() && self.ridge_prior_lambda > 0.0) {
            return Err(Error::schema("ridge_prior_lambda", "must be positive"));
        }
        Ok(())
    }

    fn pipeline(&self, stride: usize, max_lag: usize) -> Result<Pipeline> {
        Ok(Pipeline {
            window: WindowSpec::new(self.context, self.horizon, stride)?,
            scan: ScanConfig {
                max_lag,
                ar_order: self.ar_order,
            },
            alpha: self.alpha,
            correction: self.correction,
            discovery_fraction: self.discovery_fraction,
            split: self.split,
            scale_eps: self.scale_eps,
        })
    }
}

fn exp2_source(config: &Exp2Config, seed: u64, index: usize) -> Result<Option<Prepared>> {
    let root = Seed(seed).named("exp2-source", index as u64);
    let n_vars = root.child(0).rng().random_range(config.source_vars.min..=config.source_vars.max);
    let params = SpecParams {
        n_vars,
        ..config.source_generator
    };
    let spec = stabilize(&sample_spec(&params, root.child(1))?);
    let data = generate(&spec, config.source_steps, root.child(2))?;
    let pipe = config.pipeline(config.source_stride, params.max_lag)?;
    Ok(match prepare(&spec, &data, &pipe)? {
        Ok(p) => Some(p),
        Err(reason) => {
            log::info!("seed {seed} source {index} unused: {reason}");
            None
        }
    })
}

struct SeedOutcome {
    source_pairs: usize,
    target_pairs: Vec<PairSummary>,
    /// `(variant, synchronized, model, mape)`
    runs: Vec<(TransferVariant, bool, ModelKind, f64)>,
}

fn exp2_seed(config: &Exp2Config, seed: u64) -> Result<SeedOutcome> {
    let sources: Vec<Prepared> = (0..config.n_sources)
        .into_par_iter()
        .map(|i| exp2_source(config, seed, i))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let root = Seed(seed).named("exp2-target", 0);
    let spec = stabilize(&sample_spec(&config.target_generator, root.child(1))?);
    let data = generate(&spec, config.target_steps, root.child(2))?;
    let pipe = config.pipeline(config.target_stride, config.target_generator.max_lag)?;
    let target = prepare(&spec, &data, &pipe)?
        .map_err(|reason| Error::Insufficient(format!("seed {seed} target dataset unusable: {reason}")))?;
    if config.n_sources > 0 && sources.is_empty() {
        log::warn!("seed {seed}: no source dataset yielded pairs");
    }
    let mut runs = Vec::new();
    for synchronized in [true, false] {
        let tgt = target.variant(synchronized);
        let src_train: Vec<ScaledSet> = sources.iter().map(|p| p.variant(synchronized).train.clone()).collect();
        let src_val: Vec<ScaledSet> = sources.iter().map(|p| p.variant(synchronized).val.clone()).collect();
        for &kind in &config.models {
            let cfg = TrainConfig {
                seed: model_seed(root, kind),
                ..config.train
            };
            if !src_train.is_empty() {
                let model = transfer_model(config, kind, &src_train, &src_val, &tgt.train, &tgt.val, &cfg)?;
                let m = evaluate(&model, &tgt.test, config.mape_floor)?;
                runs.push((TransferVariant::PretrainedFinetuned, synchronized, kind, m));
            }
            let model = train(kind, &tgt.train, &tgt.val, &cfg)?;
            let m = evaluate(&model, &tgt.test, config.mape_floor)?;
            runs.push((TransferVariant::TargetOnly, synchronized, kind, m));
        }
    }
    Ok(SeedOutcome {
        source_pairs: sources.iter().map(|p| p.pairs.len()).sum(),
        target_pairs: target.pairs,
        runs,
    })
}

fn transfer_model(
    config: &Exp2Config,
    kind: ModelKind,
    src_train: &[ScaledSet],
    src_val: &[ScaledSet],
    tgt_train: &ScaledSet,
    tgt_val: &ScaledSet,
    cfg: &TrainConfig,
) -> Result<ForecastModel> {
    match kind {
        ModelKind::Naive => Ok(ForecastModel::naive(tgt_train.input_dim, tgt_train.output_dim)),
        ModelKind::Ridge => {
            let prior = train_ridge(&ScaledSet::concat(src_train)?, cfg)?;
            train_ridge_with_prior(tgt_train, cfg, &prior, config.ridge_prior_lambda * tgt_train.len() as f64)
        }
        ModelKind::Mlp => Ok(pretrain_finetune(src_train, src_val, tgt_train, tgt_val, cfg, &config.finetune)?.finetuned.model),
    }
}

/// Pre-training on pooled source pairs plus fine-tuning, against training
/// on the target alone, for both pair variants.
pub fn run_experiment2(config: &Exp2Config) -> Result<Exp2Report> {
    config.validate()?;
    let outcomes = config
        .seeds
        .iter()
        .map(|&seed| exp2_seed(config, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for variant in [TransferVariant::PretrainedFinetuned, TransferVariant::TargetOnly] {
        for synchronized in [true, false] {
            let runs: Vec<(u64, ModelKind, f64)> = config
                .seeds
                .iter()
                .zip(&outcomes)
                .flat_map(|(&seed, o)| {
                    o.runs
                        .iter()
                        .filter(move |r| r.0 == variant && r.1 == synchronized)
                        .map(move |r| (seed, r.2, r.3))
                })
                .collect();
            if runs.is_empty() {
                continue;
            }
            let mape = runs.iter().map(|r| r.2).sum::<f64>() / runs.len() as f64;
            rows.push(Exp2Row {
                variant,
                synchronized,
                mape,
                runs,
            });
        }
    }
    let mut note = EXP2_NOTE.to_string();
    if config.n_sources == 0 || outcomes.iter().all(|o| o.source_pairs == 0) {
        note.push_str("; no source pairs available, pre-trained rows omitted");
    }
    Ok(Exp2Report {
        note,
        config: config.clone(),
        seeds: config.seeds.clone(),
        rows,
        source_pairs: outcomes.iter().map(|o| o.source_pairs).collect(),
        target_pairs: outcomes.into_iter().map(|o| o.target_pairs).collect(),
    })
}
