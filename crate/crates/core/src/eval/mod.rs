//! Forecast error metrics and the two synchronized-vs-non-synchronized
//! experiments.
//!
//! MAPE is computed on min-max scaled values (the same space models are
//! trained in), with a floor on the denominator so scaled truths near zero
//! do not dominate.

mod experiment;
mod report;

use crate::error::{Error, Result};
use crate::forecast::{ForecastModel, ScaledSet};

pub use experiment::{exp1_generator, pool_partitions, run_experiment1, Partitions, run_experiment2, Exp1Config, Exp2Config, SourceVars};
pub use report::{
    diff_pct, DatasetModelResult, DatasetResult, Exp1Report, Exp2Report, Exp2Row, ModelSummary, PairSummary,
    SeedSummary, TransferVariant, EXP2_NOTE, POOLING_NOTE,
};

pub const DEFAULT_MAPE_FLOOR: f64 = 0.01;

/// `100 · mean_k |pred_k − truth_k| / max(|truth_k|, eps_floor)`.
pub fn mape(pred: &[f64], truth: &[f64], eps_floor: f64) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Insufficient("mape of zero values".into()));
    }
    if !(eps_floor.is_finite() && eps_floor > 0.0) {
        return Err(Error::Invalid(format!("mape floor must be positive, got {eps_floor}")));
    }
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        if !(p.is_finite() && t.is_finite()) {
            return Err(Error::Invalid(format!("non-finite value in mape (pred {p}, truth {t})")));
        }
        sum += (p - t).abs() / t.abs().max(eps_floor);
    }
    Ok(100.0 * sum / pred.len() as f64)
}

/// MAPE of every sample in `test`, in row order.
pub fn sample_mapes(model: &ForecastModel, test: &ScaledSet, eps_floor: f64) -> Result<Vec<f64>> {
    if test.is_empty() {
        return Err(Error::Insufficient("cannot evaluate on an empty test set".into()));
    }
    let pred = model.predict_set(test)?;
    let h = test.output_dim;
    (0..test.len())
        .map(|i| mape(&pred[i * h..(i + 1) * h], test.target(i), eps_floor))
        .collect()
}

/// Mean per-sample MAPE over `test`.
pub fn evaluate(model: &ForecastModel, test: &ScaledSet, eps_floor: f64) -> Result<f64> {
    let m = sample_mapes(model, test, eps_floor)?;
    Ok(m.iter().sum::<f64>() / m.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::{ScaledSample, ModelKind, TrainConfig};

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[0.3, 0.7], &[0.3, 0.7], 0.01).unwrap(), 0.0);
        assert!((mape(&[0.5], &[1.0], 0.01).unwrap() - 50.0).abs() < 1e-12);
        assert!((mape(&[0.005], &[0.0], 0.01).unwrap() - 50.0).abs() < 1e-12);
        assert!(mape(&[1.0], &[1.0, 2.0], 0.01).is_err());
        assert!(mape(&[], &[], 0.01).is_err());
        assert!(mape(&[f64::NAN], &[1.0], 0.01).is_err());
    }

    fn set_of(rows: &[(Vec<f64>, Vec<f64>)]) -> ScaledSet {
        let mut s = ScaledSet::empty(rows[0].0.len(), rows[0].1.len());
        for (x, t) in rows {
            s.push(&ScaledSample {
                input: x.clone(),
                target: t.clone(),
                effect_min: 0.0,
                effect_max: 1.0,
                degenerate: [false; 3],
            })
            .unwrap();
        }
        s
    }

    #[test]
    fn evaluate_averages_per_sample() {
        let naive = ForecastModel::naive(3, 2);
        let one = set_of(&[(vec![0.5, 0.0, 0.0], vec![1.0, 0.5])]);
        assert!((evaluate(&naive, &one, 0.01).unwrap() - 25.0).abs() < 1e-12);
        let two = set_of(&[(vec![0.5, 0.0, 0.0], vec![1.0, 0.5]), (vec![0.2, 0.0, 0.0], vec![0.2, 0.2])]);
        assert!((evaluate(&naive, &two, 0.01).unwrap() - 12.5).abs() < 1e-12);
        assert!(evaluate(&naive, &ScaledSet::empty(3, 2), 0.01).is_err());
    }

    #[test]
    fn naive_loses_to_ridge_on_proportional_pair() {
        use crate::graph::CauseEffectPair;
        use crate::rng::Seed;
        use crate::sampler::{build_samples, split, SplitRatios};
        use crate::synthgen::{generate, CausalEdge, CausalSpec};
        use crate::window::WindowSpec;
        // effect = 0.8 · cause delayed 7 steps, cause an AR(1) with noise
        let spec = CausalSpec::new(
            2,
            vec![1.0, 0.0],
            vec![
                CausalEdge { cause: 0, effect: 0, lag: 1, coeff: 0.7 },
                CausalEdge { cause: 0, effect: 1, lag: 7, coeff: 0.8 },
            ],
        )
        .unwrap();
        let data = generate(&spec, 1500, Seed(11)).unwrap();
        let pair = CauseEffectPair {
            effect_index: 1,
            cause_index: 0,
            effect_name: "x1",
            cause_name: "x0",
            effect: data.column(1),
            cause: data.column(0),
            lag: 7,
        };
        let w = WindowSpec::new(6, 2, 1).unwrap();
        let sp = split(&build_samples(&pair, &w).unwrap(), &SplitRatios::default(), w.purge_gap()).unwrap();
        let tr = ScaledSet::from_samples(&sp.train, 0.0).unwrap();
        let te = ScaledSet::from_samples(&sp.test, 0.0).unwrap();
        let ridge = crate::forecast::train(ModelKind::Ridge, &tr, &tr, &TrainConfig::default()).unwrap();
        let r = evaluate(&ridge, &te, DEFAULT_MAPE_FLOOR).unwrap();
        let n = evaluate(&ForecastModel::naive(tr.input_dim, 2), &te, DEFAULT_MAPE_FLOOR).unwrap();
        assert!(n > 0.0 && n > r, "naive {n} ridge {r}");
    }
}
