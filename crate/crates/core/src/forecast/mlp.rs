//! One-hidden-layer ReLU network trained with Adam on mean squared error.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ForecastModel, ModelKind, ScaledSet, TrainConfig};
use crate::error::{Error, Result};
use crate::rng::Seed;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Row chunk used when evaluating loss over a whole set.
const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpDims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl MlpDims {
    pub fn new(input: usize, hidden: usize, output: usize) -> Self {
        Self { input, hidden, output }
    }

    pub fn param_count(&self) -> usize {
        self.hidden * (self.input + 1) + self.output * (self.hidden + 1)
    }

    /// Offsets of `W1`, `b1`, `W2`, `b2` in the flat parameter vector.
    fn offsets(&self) -> [usize; 4] {
        let w1 = 0;
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.output * self.hidden;
        [w1, b1, w2, b2]
    }

    fn split<'a>(&self, p: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], &'a [f64]) {
        let [_, b1, w2, b2] = self.offsets();
        (&p[..b1], &p[b1..w2], &p[w2..b2], &p[b2..])
    }
}

/// `c = a · b + beta · c` where `c` is `m × n` row-major and `a`, `b` are
/// addressed through explicit row and column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k > 0 {
        assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
        assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    }
    // SAFETY: the assertions above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Pre-activations of the hidden layer into `z1`, output into `y`.
fn forward_into(dims: &MlpDims, params: &[f64], x: &[f64], rows: usize, z1: &mut Vec<f64>, y: &mut Vec<f64>) {
    let (d, hd, o) = (dims.input, dims.hidden, dims.output);
    let (w1, b1, w2, b2) = dims.split(params);
    z1.clear();
    for _ in 0..rows {
        z1.extend_from_slice(b1);
    }
    gemm(rows, d, hd, x, d, 1, w1, 1, d, 1.0, z1);
    let a: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();
    y.clear();
    for _ in 0..rows {
        y.extend_from_slice(b2);
    }
    gemm(rows, hd, o, &a, hd, 1, w2, 1, hd, 1.0, y);
}

/// Network outputs for `rows` stacked inputs, `rows × output` row-major.
pub fn mlp_forward(dims: &MlpDims, params: &[f64], inputs: &[f64], rows: usize) -> Vec<f64> {
    let mut z1 = Vec::new();
    let mut y = Vec::new();
    forward_into(dims, params, inputs, rows, &mut z1, &mut y);
    y
}

/// Mean squared error over all `rows × output` entries and its gradient
/// with respect to the flat parameter vector.
pub fn mlp_loss_and_grad(dims: &MlpDims, params: &[f64], inputs: &[f64], targets: &[f64], rows: usize) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; dims.param_count()];
    let loss = loss_and_grad_into(dims, params, inputs, targets, rows, &mut grad);
    (loss, grad)
}

fn loss_and_grad_into(dims: &MlpDims, params: &[f64], x: &[f64], t: &[f64], rows: usize, grad: &mut [f64]) -> f64 {
    let (d, hd, o) = (dims.input, dims.hidden, dims.output);
    let mut z1 = Vec::with_capacity(rows * hd);
    let mut y = Vec::with_capacity(rows * o);
    forward_into(dims, params, x, rows, &mut z1, &mut y);
    let scale = 1.0 / (rows * o) as f64;
    let mut loss = 0.0;
    let mut dy = vec![0.0; rows * o];
    for i in 0..rows * o {
        let r = y[i] - t[i];
        loss += r * r;
        dy[i] = 2.0 * r * scale;
    }
    let a: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();
    let [_, ob1, ow2, ob2] = dims.offsets();
    let (g_w1, rest) = grad.split_at_mut(ob1);
    let (g_b1, rest) = rest.split_at_mut(ow2 - ob1);
    let (g_w2, g_b2) = rest.split_at_mut(ob2 - ow2);
    // dW2 = dYᵀ A
    gemm(o, rows, hd, &dy, 1, o, &a, hd, 1, 0.0, g_w2);
    g_b2.fill(0.0);
    for row in dy.chunks_exact(o) {
        for (g, v) in g_b2.iter_mut().zip(row) {
            *g += v;
        }
    }
    // dZ1 = (dY W2) ⊙ [Z1 > 0]
    let w2 = &params[ow2..ob2];
    let mut dz = vec![0.0; rows * hd];
    gemm(rows, o, hd, &dy, o, 1, w2, hd, 1, 0.0, &mut dz);
    for (g, &z) in dz.iter_mut().zip(&z1) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    // dW1 = dZ1ᵀ X
    gemm(hd, rows, d, &dz, 1, hd, x, d, 1, 0.0, g_w1);
    g_b1.fill(0.0);
    for row in dz.chunks_exact(hd) {
        for (g, v) in g_b1.iter_mut().zip(row) {
            *g += v;
        }
    }
    loss * scale
}

/// Mean squared error of `params` over a whole set.
fn set_loss(dims: &MlpDims, params: &[f64], set: &ScaledSet) -> f64 {
    let (d, o) = (dims.input, dims.output);
    let mut total = 0.0;
    let mut z1 = Vec::new();
    let mut y = Vec::new();
    let mut start = 0;
    while start < set.len() {
        let rows = EVAL_CHUNK.min(set.len() - start);
        forward_into(dims, params, &set.inputs[start * d..(start + rows) * d], rows, &mut z1, &mut y);
        let t = &set.targets[start * o..(start + rows) * o];
        total += y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        start += rows;
    }
    total / (set.len() * o) as f64
}

/// He-normal hidden weights, `1/sqrt(hidden)` output weights, zero biases.
fn init_params(dims: &MlpDims, seed: Seed) -> Vec<f64> {
    let mut rng = seed.rng();
    let mut p = vec![0.0; dims.param_count()];
    let [_, ob1, ow2, ob2] = dims.offsets();
    let he = Normal::new(0.0, (2.0 / dims.input as f64).sqrt()).expect("positive std");
    for v in &mut p[..ob1] {
        *v = he.sample(&mut rng);
    }
    let out = Normal::new(0.0, (1.0 / dims.hidden as f64).sqrt()).expect("positive std");
    for v in &mut p[ow2..ob2] {
        *v = out.sample(&mut rng);
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean mini-batch loss during the epoch; for epoch 0 the loss of the
    /// initialization over the full training set.
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpRun {
    pub model: ForecastModel,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
}

fn check_sets(train: &ScaledSet, val: &ScaledSet) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Insufficient("mlp training set is empty".into()));
    }
    if !val.is_empty() && (val.input_dim, val.output_dim) != (train.input_dim, train.output_dim) {
        return Err(Error::Shape(format!(
            "validation set is {}→{}, training set is {}→{}",
            val.input_dim, val.output_dim, train.input_dim, train.output_dim
        )));
    }
    Ok(())
}

/// Adam from `start`, keeping the parameters with the lowest validation loss
/// seen at the end of any epoch, the starting point included. An empty
/// validation set selects on training loss instead.
fn fit(
    dims: MlpDims,
    start: Vec<f64>,
    train: &ScaledSet,
    val: &ScaledSet,
    config: &TrainConfig,
    shuffle_seed: Seed,
) -> Result<MlpRun> {
    let select = |p: &[f64]| if val.is_empty() { set_loss(&dims, p, train) } else { set_loss(&dims, p, val) };
    let n = train.len();
    let (d, o) = (dims.input, dims.output);
    let mut params = start;
    let init_val = select(&params);
    if !init_val.is_finite() {
        return Err(Error::TrainingDiverged { epoch: 0 });
    }
    let mut history = vec![EpochLoss {
        epoch: 0,
        train_loss: set_loss(&dims, &params, train),
        val_loss: init_val,
    }];
    let mut best = (init_val, 0, params.clone());
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = shuffle_seed.rng();
    let batch = config.batch_size.min(n);
    let mut xb = Vec::with_capacity(batch * d);
    let mut tb = Vec::with_capacity(batch * o);
    let mut step = 0i32;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(batch) {
            xb.clear();
            tb.clear();
            for &i in chunk {
                xb.extend_from_slice(train.input(i));
                tb.extend_from_slice(train.target(i));
            }
            let loss = loss_and_grad_into(&dims, &params, &xb, &tb, chunk.len(), &mut grad);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            loss_sum += loss;
            batches += 1;
            step += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(step);
            let c2 = 1.0 - ADAM_BETA2.powi(step);
            for j in 0..params.len() {
                let g = grad[j];
                m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g;
                v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g * g;
                params[j] -= config.learning_rate * (m[j] / c1) / ((v[j] / c2).sqrt() + ADAM_EPS);
            }
        }
        let val_loss = select(&params);
        if !val_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.push(EpochLoss {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, params.clone());
        }
    }
    Ok(MlpRun {
        model: ForecastModel {
            kind: ModelKind::Mlp,
            input_dim: d,
            output_dim: o,
            hidden: dims.hidden,
            config: *config,
            params: best.2,
        },
        history,
        best_epoch: best.1,
    })
}

pub fn train_mlp(train: &ScaledSet, val: &ScaledSet, config: &TrainConfig) -> Result<MlpRun> {
    config.validate()?;
    check_sets(train, val)?;
    let dims = MlpDims::new(train.input_dim, config.hidden_units, train.output_dim);
    let start = init_params(&dims, config.seed.child(1));
    fit(dims, start, train, val, config, config.seed.child(2))
}

/// Learning-rate and epoch multipliers applied when continuing training on
/// the target domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneSchedule {
    pub lr_scale: f64,
    pub epoch_scale: f64,
}

impl Default for FinetuneSchedule {
    fn default() -> Self {
        Self {
            lr_scale: 0.1,
            epoch_scale: 0.5,
        }
    }
}

impl FinetuneSchedule {
    pub fn apply(&self, config: &TrainConfig) -> TrainConfig {
        TrainConfig {
            learning_rate: config.learning_rate * self.lr_scale,
            epochs: (config.epochs as f64 * self.epoch_scale).floor() as usize,
            seed: config.seed.child(3),
            ..*config
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferRun {
    pub pretrained: MlpRun,
    pub finetuned: MlpRun,
}

/// Pre-trains on the pooled source samples (selected on the pooled source
/// validation samples), then fine-tunes on the target with the scheduled
/// learning rate and epochs, selecting on `target_val`. Fine-tuning starts
/// a fresh optimizer state.
pub fn pretrain_finetune(
    source_train: &[ScaledSet],
    source_val: &[ScaledSet],
    target_train: &ScaledSet,
    target_val: &ScaledSet,
    config: &TrainConfig,
    schedule: &FinetuneSchedule,
) -> Result<TransferRun> {
    if source_train.is_empty() {
        return Err(Error::Invalid("pre-training needs at least one source set".into()));
    }
    let pool = ScaledSet::concat(source_train)?;
    let pool_val = if source_val.is_empty() {
        ScaledSet::empty(pool.input_dim, pool.output_dim)
    } else {
        ScaledSet::concat(source_val)?
    };
    if (target_train.input_dim, target_train.output_dim) != (pool.input_dim, pool.output_dim) {
        return Err(Error::Shape(format!(
            "target samples are {}→{}, source samples {}→{}",
            target_train.input_dim, target_train.output_dim, pool.input_dim, pool.output_dim
        )));
    }
    let pretrained = train_mlp(&pool, &pool_val, config)?;
    let ft_config = schedule.apply(config);
    ft_config.validate()?;
    check_sets(target_train, target_val)?;
    let dims = MlpDims::new(pool.input_dim, config.hidden_units, pool.output_dim);
    let mut finetuned = fit(
        dims,
        pretrained.model.params.clone(),
        target_train,
        target_val,
        &ft_config,
        ft_config.seed,
    )?;
    finetuned.model.config = *config;
    Ok(TransferRun { pretrained, finetuned })
}
