//! Channel-dependent forecasters over 3-channel window samples.
//!
//! Every model maps the flattened, per-channel scaled input
//! `[effect_ctx | sync_cause_ctx | raw_cause_ctx]` (length `3C`) directly to
//! the `H` scaled target values. Synchronized and non-synchronized sample
//! sets of the same window spec share this shape, so any model accepts both.

mod mlp;
mod ridge;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::sampler::{SampleSet, WindowSample};
use crate::window::{minmax_scale, invert_value, scale_value};

pub use mlp::{
    mlp_forward, mlp_loss_and_grad, pretrain_finetune, train_mlp, EpochLoss, FinetuneSchedule, MlpDims, MlpRun, TransferRun,
};
pub use ridge::{train_ridge, train_ridge_with_prior};

/// Number of input channels per sample.
pub const CHANNELS: usize = 3;

/// A sample after per-channel min-max scaling of its context. The target is
/// scaled with the effect channel's context statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledSample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub effect_min: f64,
    pub effect_max: f64,
    pub degenerate: [bool; CHANNELS],
}

impl ScaledSample {
    /// Maps scaled target-space values back to the effect's original units.
    pub fn invert_target(&self, scaled: &[f64]) -> Vec<f64> {
        scaled
            .iter()
            .map(|&s| invert_value(s, self.effect_min, self.effect_max))
            .collect()
    }
}

pub fn scale_sample(sample: &WindowSample, eps_floor: f64) -> Result<ScaledSample> {
    let c = sample.effect_ctx.len();
    if sample.sync_cause_ctx.len() != c || sample.raw_cause_ctx.len() != c {
        return Err(Error::Shape(format!(
            "channel lengths differ: {}, {}, {}",
            c,
            sample.sync_cause_ctx.len(),
            sample.raw_cause_ctx.len()
        )));
    }
    let mut window = Vec::with_capacity(CHANNELS * c);
    window.extend_from_slice(&sample.effect_ctx);
    window.extend_from_slice(&sample.sync_cause_ctx);
    window.extend_from_slice(&sample.raw_cause_ctx);
    let sw = minmax_scale(&window, &[c; CHANNELS], eps_floor)?;
    let (lo, hi) = (sw.ch_min[0], sw.ch_max[0]);
    Ok(ScaledSample {
        target: sample.target.iter().map(|&v| scale_value(v, lo, hi)).collect(),
        effect_min: lo,
        effect_max: hi,
        degenerate: [sw.is_degenerate(0), sw.is_degenerate(1), sw.is_degenerate(2)],
        input: sw.scaled,
    })
}

/// Scaled samples stored as dense row-major matrices for training.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledSet {
    pub input_dim: usize,
    pub output_dim: usize,
    /// `len × input_dim`, row-major.
    pub inputs: Vec<f64>,
    /// `len × output_dim`, row-major.
    pub targets: Vec<f64>,
    /// Effect-channel `(min, max)` for each row.
    pub effect_stats: Vec<(f64, f64)>,
}

impl ScaledSet {
    pub fn empty(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            inputs: Vec::new(),
            targets: Vec::new(),
            effect_stats: Vec::new(),
        }
    }

    pub fn from_samples(set: &SampleSet, eps_floor: f64) -> Result<Self> {
        let w = set.window;
        let mut out = Self::empty(CHANNELS * w.context, w.horizon);
        for s in &set.samples {
            out.push(&scale_sample(s, eps_floor)?)?;
        }
        Ok(out)
    }

    pub fn push(&mut self, s: &ScaledSample) -> Result<()> {
        if s.input.len() != self.input_dim || s.target.len() != self.output_dim {
            return Err(Error::Shape(format!(
                "sample is {}→{}, set is {}→{}",
                s.input.len(),
                s.target.len(),
                self.input_dim,
                self.output_dim
            )));
        }
        self.inputs.extend_from_slice(&s.input);
        self.targets.extend_from_slice(&s.target);
        self.effect_stats.push((s.effect_min, s.effect_max));
        Ok(())
    }

    /// Concatenates sets of identical shape in order.
    pub fn concat<'a>(sets: impl IntoIterator<Item = &'a ScaledSet>) -> Result<Self> {
        let mut it = sets.into_iter().peekable();
        let first = it
            .peek()
            .ok_or_else(|| Error::Invalid("cannot pool zero sample sets".into()))?;
        let mut out = Self::empty(first.input_dim, first.output_dim);
        for s in it {
            if (s.input_dim, s.output_dim) != (out.input_dim, out.output_dim) {
                return Err(Error::Shape(format!(
                    "cannot pool a {}→{} set into {}→{}",
                    s.input_dim, s.output_dim, out.input_dim, out.output_dim
                )));
            }
            out.inputs.extend_from_slice(&s.inputs);
            out.targets.extend_from_slice(&s.targets);
            out.effect_stats.extend_from_slice(&s.effect_stats);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.effect_stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effect_stats.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.output_dim..(i + 1) * self.output_dim]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Naive,
    Ridge,
    Mlp,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Naive => "naive",
            ModelKind::Ridge => "ridge",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(ModelKind::Naive),
            "ridge" => Ok(ModelKind::Ridge),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::Invalid(format!("unknown model kind `{other}` (naive, ridge, mlp)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub ridge_lambda: f64,
    pub hidden_units: usize,
    pub seed: Seed,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            learning_rate: 1e-3,
            ridge_lambda: 1e-3,
            hidden_units: 64,
            seed: Seed(0),
        }
    }
}

impl TrainConfig {
    /// Zero epochs is accepted and yields the initialization.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::schema(format!("train.{field}"), msg));
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive".into());
        }
        if self.hidden_units == 0 {
            return bad("hidden_units", "must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate", format!("must be positive, got {}", self.learning_rate));
        }
        if !(self.ridge_lambda.is_finite() && self.ridge_lambda > 0.0) {
            return bad("ridge_lambda", format!("must be positive, got {}", self.ridge_lambda));
        }
        Ok(())
    }
}

/// A trained predictor. Parameter layouts:
///
/// * naive: empty; repeats the last scaled effect value.
/// * ridge: `W` (`output × input`, row-major) then bias (`output`).
/// * mlp: `W1` (`hidden × input`), `b1`, `W2` (`output × hidden`), `b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastModel {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: usize,
    pub config: TrainConfig,
    pub params: Vec<f64>,
}

const CHECKPOINT_FORMAT: &str = "cts-forecast-model/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    kind: ModelKind,
    input_dim: usize,
    output_dim: usize,
    hidden: usize,
    config: TrainConfig,
    params: Vec<f64>,
}

pub fn param_count(kind: ModelKind, input_dim: usize, output_dim: usize, hidden: usize) -> usize {
    match kind {
        ModelKind::Naive => 0,
        ModelKind::Ridge => output_dim * (input_dim + 1),
        ModelKind::Mlp => MlpDims::new(input_dim, hidden, output_dim).param_count(),
    }
}

impl ForecastModel {
    pub fn naive(input_dim: usize, output_dim: usize) -> Self {
        Self {
            kind: ModelKind::Naive,
            input_dim,
            output_dim,
            hidden: 0,
            config: TrainConfig::default(),
            params: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.input_dim % CHANNELS != 0 {
            return Err(Error::schema(
                "input_dim",
                format!("must be a positive multiple of {CHANNELS}, got {}", self.input_dim),
            ));
        }
        if self.output_dim == 0 {
            return Err(Error::schema("output_dim", "must be positive"));
        }
        if self.kind == ModelKind::Mlp && self.hidden == 0 {
            return Err(Error::schema("hidden", "mlp needs at least one hidden unit"));
        }
        let want = param_count(self.kind, self.input_dim, self.output_dim, self.hidden);
        if self.params.len() != want {
            return Err(Error::schema(
                "params",
                format!("{} model {}→{} needs {want} parameters, found {}", self.kind, self.input_dim, self.output_dim, self.params.len()),
            ));
        }
        if let Some(i) = self.params.iter().position(|p| !p.is_finite()) {
            return Err(Error::schema(format!("params[{i}]"), "must be finite"));
        }
        Ok(())
    }

    pub fn context(&self) -> usize {
        self.input_dim / CHANNELS
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "{} model expects {} inputs, got {}",
                self.kind,
                self.input_dim,
                input.len()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.predict_rows(input, 1))
    }

    /// Predictions for every row of `set`, `len × output_dim` row-major.
    pub fn predict_set(&self, set: &ScaledSet) -> Result<Vec<f64>> {
        if set.input_dim != self.input_dim || set.output_dim != self.output_dim {
            return Err(Error::Shape(format!(
                "{} model is {}→{}, sample set is {}→{}",
                self.kind, self.input_dim, self.output_dim, set.input_dim, set.output_dim
            )));
        }
        Ok(self.predict_rows(&set.inputs, set.len()))
    }

    fn predict_rows(&self, inputs: &[f64], rows: usize) -> Vec<f64> {
        let (d, h) = (self.input_dim, self.output_dim);
        match self.kind {
            ModelKind::Naive => {
                let c = self.context();
                (0..rows)
                    .flat_map(|r| std::iter::repeat_n(inputs[r * d + c - 1], h))
                    .collect()
            }
            ModelKind::Ridge => {
                let (w, b) = self.params.split_at(h * d);
                let mut out = Vec::with_capacity(rows * h);
                for r in 0..rows {
                    let x = &inputs[r * d..(r + 1) * d];
                    out.extend((0..h).map(|k| b[k] + dot(&w[k * d..(k + 1) * d], x)));
                }
                out
            }
            ModelKind::Mlp => {
                let dims = MlpDims::new(d, self.hidden, h);
                mlp_forward(&dims, &self.params, inputs, rows)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            kind: self.kind,
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            hidden: self.hidden,
            config: self.config,
            params: self.params.clone(),
        };
        Ok(serde_json::to_string_pretty(&ck)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::schema(
                "format",
                format!("expected `{CHECKPOINT_FORMAT}`, found `{}`", ck.format),
            ));
        }
        let model = ForecastModel {
            kind: ck.kind,
            input_dim: ck.input_dim,
            output_dim: ck.output_dim,
            hidden: ck.hidden,
            config: ck.config,
            params: ck.params,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trains a model of the given kind. The MLP uses `val` for snapshot
/// selection; ridge and naive ignore it.
pub fn train(kind: ModelKind, train: &ScaledSet, val: &ScaledSet, config: &TrainConfig) -> Result<ForecastModel> {
    match kind {
        ModelKind::Naive => Ok(ForecastModel::naive(train.input_dim, train.output_dim)),
        ModelKind::Ridge => train_ridge(train, config),
        ModelKind::Mlp => Ok(train_mlp(train, val, config)?.model),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::window::WindowSpec;

    fn sample(effect: Vec<f64>, sync: Vec<f64>, raw: Vec<f64>, target: Vec<f64>) -> WindowSample {
        WindowSample {
            anchor: effect.len(),
            effect_ctx: effect,
            sync_cause_ctx: sync,
            raw_cause_ctx: raw,
            target,
        }
    }

    #[test]
    fn target_uses_context_statistics() {
        let ramp: Vec<f64> = (0..30).map(f64::from).collect();
        let s = sample(ramp.clone(), ramp.clone(), ramp, (30..40).map(f64::from).collect());
        let sc = scale_sample(&s, 0.0).unwrap();
        for (k, v) in sc.target.iter().enumerate() {
            assert!((v - (30 + k) as f64 / 29.0).abs() < 1e-15);
        }
        assert!(sc.target.iter().all(|&v| v > 1.0));
        assert_eq!(sc.input[29], 1.0);
    }

    #[test]
    fn constant_effect_gives_half_target() {
        let s = sample(vec![2.0; 5], vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![1.0; 5], vec![7.0, -3.0]);
        let sc = scale_sample(&s, 0.0).unwrap();
        assert_eq!(sc.target, vec![0.5, 0.5]);
        assert_eq!(sc.degenerate, [true, false, true]);
    }

    #[test]
    fn target_round_trip() {
        let s = sample(
            vec![0.3, -1.7, 2.9, 0.1],
            vec![1.0, 2.0, 3.0, 5.0],
            vec![4.0, 1.0, 0.0, 2.0],
            vec![1.234_567_891, -9.87, 3.3],
        );
        let sc = scale_sample(&s, 0.0).unwrap();
        for (a, b) in sc.invert_target(&sc.target).iter().zip(&s.target) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn naive_repeats_last_effect_value() {
        let m = ForecastModel::naive(9, 4);
        let x = [0.1, 0.2, 0.7, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        assert_eq!(m.predict(&x).unwrap(), vec![0.7; 4]);
        assert!(m.predict(&x[..8]).is_err());
    }

    #[test]
    fn zero_mlp_outputs_zero() {
        let dims = MlpDims::new(6, 5, 3);
        let m = ForecastModel {
            kind: ModelKind::Mlp,
            input_dim: 6,
            output_dim: 3,
            hidden: 5,
            config: TrainConfig::default(),
            params: vec![0.0; dims.param_count()],
        };
        assert_eq!(m.predict(&[0.3, -1.0, 2.0, 0.4, 0.5, 0.9]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        use rand::Rng;
        let mut rng = Seed(9).rng();
        let dims = MlpDims::new(9, 4, 2);
        let m = ForecastModel {
            kind: ModelKind::Mlp,
            input_dim: 9,
            output_dim: 2,
            hidden: 4,
            config: TrainConfig { seed: Seed(77), ..TrainConfig::default() },
            params: (0..dims.param_count()).map(|_| rng.random::<f64>() * 1e-3 - 3e-4).collect(),
        };
        let back = ForecastModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.params.iter().zip(&m.params) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let mut broken = m.clone();
        broken.params.pop();
        assert!(ForecastModel::from_json(&broken.to_json().unwrap()).is_err());
        let json = m.to_json().unwrap().replace("\"kind\"", "\"extra\": 1, \"kind\"");
        assert!(ForecastModel::from_json(&json).is_err());
    }

    #[test]
    fn scaled_set_layout() {
        use crate::graph::CauseEffectPair;
        let e: Vec<f64> = (0..40).map(|t| (t as f64 * 0.3).sin()).collect();
        let z: Vec<f64> = (0..40).map(|t| (t as f64 * 0.2).cos()).collect();
        let pair = CauseEffectPair {
            effect_index: 0,
            cause_index: 1,
            effect_name: "a",
            cause_name: "b",
            effect: &e,
            cause: &z,
            lag: 2,
        };
        let set = crate::sampler::build_samples(&pair, &WindowSpec::new(6, 3, 1).unwrap()).unwrap();
        let ss = ScaledSet::from_samples(&set, 0.0).unwrap();
        assert_eq!((ss.input_dim, ss.output_dim, ss.len()), (18, 3, set.len()));
        let first = scale_sample(&set.samples[0], 0.0).unwrap();
        assert_eq!(ss.input(0), &first.input[..]);
        assert_eq!(ss.target(0), &first.target[..]);
        let pooled = ScaledSet::concat([&ss, &ss]).unwrap();
        assert_eq!(pooled.len(), 2 * ss.len());
        assert!(ScaledSet::concat(std::iter::empty()).is_err());
    }
}
