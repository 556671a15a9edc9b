//! Closed-form multi-output ridge regression.

use nalgebra::{DMatrix, DVector};

use super::{ForecastModel, ModelKind, ScaledSet, TrainConfig};
use crate::error::{Error, Result};

/// Ridge fit of all `H` outputs on the `3C` inputs. Inputs and targets are
/// centered first so the bias is not shrunk.
pub fn train_ridge(train: &ScaledSet, config: &TrainConfig) -> Result<ForecastModel> {
    fit(train, config, None, config.ridge_lambda)
}

/// Ridge fit shrinking the weights toward `prior`'s instead of toward zero:
/// minimizes `|Y - XW' - b|² + lambda |W - W_prior|²`.
pub fn train_ridge_with_prior(
    train: &ScaledSet,
    config: &TrainConfig,
    prior: &ForecastModel,
    lambda: f64,
) -> Result<ForecastModel> {
    if prior.kind != ModelKind::Ridge || prior.input_dim != train.input_dim || prior.output_dim != train.output_dim {
        return Err(Error::Shape(format!(
            "prior must be a {}→{} ridge model, got {} {}→{}",
            train.input_dim, train.output_dim, prior.kind, prior.input_dim, prior.output_dim
        )));
    }
    fit(train, config, Some(&prior.params), lambda)
}

fn fit(train: &ScaledSet, config: &TrainConfig, prior: Option<&[f64]>, lambda: f64) -> Result<ForecastModel> {
    let (n, d, h) = (train.len(), train.input_dim, train.output_dim);
    if n == 0 {
        return Err(Error::Insufficient("ridge needs at least one training sample".into()));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Invalid(format!("ridge lambda must be positive, got {lambda}")));
    }
    if n < d + 1 {
        log::warn!("ridge fit with {n} samples for {d} inputs; solution is regularization-dominated");
    }
    let mut x = DMatrix::from_row_slice(n, d, &train.inputs);
    let mut y = DMatrix::from_row_slice(n, h, &train.targets);
    let x_mean: DVector<f64> = x.row_mean().transpose();
    let y_mean: DVector<f64> = y.row_mean().transpose();
    for j in 0..d {
        x.column_mut(j).add_scalar_mut(-x_mean[j]);
    }
    for k in 0..h {
        y.column_mut(k).add_scalar_mut(-y_mean[k]);
    }
    let mut gram = x.tr_mul(&x);
    for j in 0..d {
        gram[(j, j)] += lambda;
    }
    let mut rhs = x.tr_mul(&y);
    if let Some(p) = prior {
        // rhs is d × h; prior weights are stored h × d row-major
        for k in 0..h {
            for j in 0..d {
                rhs[(j, k)] += lambda * p[k * d + j];
            }
        }
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Invalid("ridge normal matrix is not positive definite".into()))?;
    let w = chol.solve(&rhs);
    let mut params = Vec::with_capacity(h * (d + 1));
    for k in 0..h {
        params.extend(w.column(k).iter());
    }
    for k in 0..h {
        params.push(y_mean[k] - w.column(k).dot(&x_mean));
    }
    Ok(ForecastModel {
        kind: ModelKind::Ridge,
        input_dim: d,
        output_dim: h,
        hidden: 0,
        config: TrainConfig {
            ridge_lambda: lambda,
            ..*config
        },
        params,
    })
}
