//! Pairwise lagged Granger-causality tests.
//!
//! For an effect `x` and a candidate cause `z` at lag `l`, the restricted
//! model regresses `x_t` on an intercept and `x_{t-1..t-p}`; the unrestricted
//! model adds the single regressor `z_{t-l}`. Both are fitted on the same
//! sample `t = max(p, l), ..., T-1`, and the F statistic of the added term
//! gives the p-value. [`scan_pair`] repeats this for every lag up to a maximum
//! and keeps the most significant one.

mod fdist;
mod ols;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fdist::{f_cdf, f_sf, ln_beta, ln_f_sf, ln_gamma, reg_inc_beta};
pub use ols::{fit_ols, OlsFit};

use crate::error::{Error, Result};
use crate::series::TimeSeriesMatrix;

/// Unrestricted residuals below this fraction of the effect's total sum of
/// squares mark the fit as deterministic.
const DEGENERATE_RSS: f64 = 1e-20;

/// Significance of a cause at one lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrangerResult {
    pub lag: usize,
    pub f_stat: f64,
    pub p_value: f64,
    /// `ln(p_value)`, kept separately because very strong lags underflow
    /// `p_value` to zero. Lag ranking uses this.
    pub ln_p_value: f64,
    pub rss_restricted: f64,
    pub rss_unrestricted: f64,
    pub n_obs: usize,
    /// The unrestricted model fits exactly; `p_value` is reported as 0.
    pub degenerate: bool,
}

/// Per-lag results for one (cause, effect) pair and the selected lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagScan {
    pub results: Vec<GrangerResult>,
    pub best_lag: usize,
}

impl LagScan {
    pub fn best(&self) -> &GrangerResult {
        &self.results[self.best_lag - 1]
    }

    pub fn max_lag(&self) -> usize {
        self.results.len()
    }
}

/// A [`LagScan`] tagged with the variable indices it was computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScan {
    pub cause: usize,
    pub effect: usize,
    pub scan: LagScan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Largest lag tested.
    pub max_lag: usize,
    /// Own lags in the restricted model.
    pub ar_order: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            max_lag: 200,
            ar_order: 5,
        }
    }
}

/// Tests whether `cause` at `lag` improves an order-`ar_order`
/// autoregression of `effect`.
pub fn granger_test(effect: &[f64], cause: &[f64], lag: usize, ar_order: usize) -> Result<GrangerResult> {
    let steps = effect.len();
    if cause.len() != steps {
        return Err(Error::Shape(format!(
            "effect has {steps} steps, cause has {}",
            cause.len()
        )));
    }
    if lag == 0 || ar_order == 0 {
        return Err(Error::Invalid(format!(
            "lag and AR order must be >= 1, got lag {lag}, order {ar_order}"
        )));
    }
    if steps <= ar_order + lag + 2 {
        return Err(Error::Insufficient(format!(
            "{steps} steps cannot support AR order {ar_order} at lag {lag} (need > {})",
            ar_order + lag + 2
        )));
    }
    let start = ar_order.max(lag);
    let n_obs = steps - start;
    let k_r = ar_order + 1;
    let k_u = k_r + 1;
    // unrestricted columns: intercept, own lags 1..=p, then the lagged cause
    let design = DMatrix::from_fn(n_obs, k_u, |r, c| {
        let t = start + r;
        match c {
            0 => 1.0,
            c if c <= ar_order => effect[t - c],
            _ => cause[t - lag],
        }
    });
    let target = DVector::from_column_slice(&effect[start..]);
    let (rss_r, rss_u) = nested_rss(&design, &target, k_r)?;

    let mean = target.mean();
    let tss: f64 = target.iter().map(|v| (v - mean).powi(2)).sum();
    let dof = n_obs - k_u;
    if tss == 0.0 || rss_u <= DEGENERATE_RSS * tss {
        return Ok(GrangerResult {
            lag,
            f_stat: f64::MAX,
            p_value: 0.0,
            ln_p_value: f64::NEG_INFINITY,
            rss_restricted: rss_r,
            rss_unrestricted: rss_u,
            n_obs,
            degenerate: true,
        });
    }
    let f_stat = ((rss_r - rss_u) / (k_u - k_r) as f64) / (rss_u / dof as f64);
    let ln_p_value = ln_f_sf(f_stat, k_u - k_r, dof)?;
    Ok(GrangerResult {
        lag,
        f_stat,
        p_value: ln_p_value.exp(),
        ln_p_value,
        rss_restricted: rss_r,
        rss_unrestricted: rss_u,
        n_obs,
        degenerate: false,
    })
}

/// Residual sums of squares of the model on the first `k_r` columns and on
/// all columns. With a full-rank QR of the full design the two share one
/// factorization, `rss_r = rss_u + (Q'y)_{k_r}^2` for a single added column,
/// which makes `rss_u <= rss_r` exact.
fn nested_rss(design: &DMatrix<f64>, target: &DVector<f64>, k_r: usize) -> Result<(f64, f64)> {
    let k_u = design.ncols();
    let qr = design.clone().qr();
    let diag = qr.r().diagonal();
    let dmax = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let full_rank = dmax > 0.0 && diag.iter().all(|v| v.abs() > ols::RANK_TOL * dmax);
    if full_rank {
        let mut qty = target.clone();
        qr.q_tr_mul(&mut qty);
        let rss_u: f64 = qty.rows(k_u, qty.len() - k_u).norm_squared();
        let added: f64 = qty.rows(k_r, k_u - k_r).norm_squared();
        Ok((rss_u + added, rss_u))
    } else {
        let restricted = design.columns(0, k_r).into_owned();
        let rss_r = fit_ols(&restricted, target)?.rss;
        let rss_u = fit_ols(design, target)?.rss;
        // nested models on one sample: any excess is rounding
        Ok((rss_r, rss_u.min(rss_r)))
    }
}

/// Runs [`granger_test`] at every lag `1..=max_lag` and selects the lag with
/// the smallest p-value, ties going to the smaller lag.
pub fn scan_pair(effect: &[f64], cause: &[f64], max_lag: usize, ar_order: usize) -> Result<LagScan> {
    if max_lag == 0 {
        return Err(Error::Invalid("max_lag must be >= 1".into()));
    }
    if effect.len() <= ar_order + max_lag + 2 {
        return Err(Error::Insufficient(format!(
            "{} steps cannot support AR order {ar_order} with lags up to {max_lag} (need > {})",
            effect.len(),
            ar_order + max_lag + 2
        )));
    }
    let results = (1..=max_lag)
        .map(|lag| granger_test(effect, cause, lag, ar_order))
        .collect::<Result<Vec<_>>>()?;
    let best_lag = best_lag(&results);
    Ok(LagScan { results, best_lag })
}

fn best_lag(results: &[GrangerResult]) -> usize {
    let mut best = 0;
    for (k, r) in results.iter().enumerate().skip(1) {
        if r.ln_p_value < results[best].ln_p_value {
            best = k;
        }
    }
    results[best].lag
}

/// Scans every ordered pair `(cause j, effect i)`, `j != i`. Pairs run in
/// parallel; the output is ordered by `(effect, cause)` regardless of
/// scheduling.
pub fn scan_all(data: &TimeSeriesMatrix, config: &ScanConfig) -> Result<Vec<PairScan>> {
    let n = data.n_vars();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    pairs
        .par_iter()
        .map(|&(effect, cause)| {
            let scan = scan_pair(data.column(effect), data.column(cause), config.max_lag, config.ar_order)?;
            Ok(PairScan { cause, effect, scan })
        })
        .collect()
}

/// One exported line of scan output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub cause: String,
    pub effect: String,
    pub best_lag: usize,
    pub f_stat: f64,
    pub p_value: f64,
    pub ln_p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub curve: Option<Vec<GrangerResult>>,
}

pub fn scan_records(scans: &[PairScan], names: &[String], with_curve: bool) -> Vec<ScanRecord> {
    scans
        .iter()
        .map(|s| {
            let best = s.scan.best();
            ScanRecord {
                cause: names[s.cause].clone(),
                effect: names[s.effect].clone(),
                best_lag: s.scan.best_lag,
                f_stat: best.f_stat,
                p_value: best.p_value,
                ln_p_value: best.ln_p_value,
                curve: with_curve.then(|| s.scan.results.clone()),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use crate::synthgen::{generate, CausalEdge, CausalSpec};

    fn lag3_pair(seed: u64) -> TimeSeriesMatrix {
        // x1_t = 0.8 x0_{t-3} + 0.1 x1_{t-1} + noise
        let spec = CausalSpec::new(
            2,
            vec![1.0, 1.0],
            vec![
                CausalEdge { cause: 0, effect: 1, lag: 3, coeff: 0.8 },
                CausalEdge { cause: 1, effect: 1, lag: 1, coeff: 0.1 },
            ],
        )
        .unwrap();
        generate(&spec, 2000, Seed(seed)).unwrap()
    }

    #[test]
    fn detects_injected_lag() {
        let m = lag3_pair(42);
        let r = granger_test(m.column(1), m.column(0), 3, 5).unwrap();
        assert!(r.p_value < 1e-6, "{r:?}");
        assert!(r.rss_unrestricted <= r.rss_restricted);
        let scan = scan_pair(m.column(1), m.column(0), 10, 5).unwrap();
        assert_eq!(scan.best_lag, 3);
        assert!(scan.results.iter().all(|r| r.rss_unrestricted <= r.rss_restricted));
        assert!(scan.results.iter().all(|r| (0.0..=1.0).contains(&r.p_value) && r.f_stat >= 0.0));
    }

    #[test]
    fn single_lag_scan_is_trivial() {
        let m = lag3_pair(1);
        let scan = scan_pair(m.column(1), m.column(0), 1, 5).unwrap();
        assert_eq!(scan.best_lag, 1);
        assert_eq!(scan.results.len(), 1);
    }

    #[test]
    fn ties_go_to_the_smaller_lag() {
        // period-2 cause: lags 1 and 3 see identical regressors on the same sample
        let mut rng = Seed(9).rng();
        let effect: Vec<f64> = (0..300).map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)).collect();
        let cause: Vec<f64> = (0..300).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let scan = scan_pair(&effect, &cause, 3, 5).unwrap();
        assert_eq!(scan.results[0].ln_p_value.to_bits(), scan.results[2].ln_p_value.to_bits());
        assert_ne!(scan.best_lag, 3);
        assert_eq!(best_lag(&[scan.results[2], scan.results[0]].map(|mut r| { r.lag += 10; r })), 13);
    }

    #[test]
    fn deterministic_relation_is_flagged() {
        let mut rng = Seed(3).rng();
        let cause: Vec<f64> = (0..200).map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)).collect();
        let lag = 4;
        let effect: Vec<f64> = (0..200).map(|t| if t >= lag { cause[t - lag] } else { 0.0 }).collect();
        let r = granger_test(&effect, &cause, lag, 5).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 0.0);
        assert!(r.rss_unrestricted <= r.rss_restricted);
    }

    #[test]
    fn insufficient_length_is_an_error() {
        let x = vec![1.0; 7];
        assert!(matches!(granger_test(&x, &x, 1, 5), Err(Error::Insufficient(_))));
        assert!(matches!(scan_pair(&x, &x, 3, 2), Err(Error::Insufficient(_))));
        assert!(granger_test(&x, &x[..6], 1, 1).is_err());
    }

    #[test]
    fn constant_effect_falls_back_without_panicking() {
        let x = vec![2.0; 100];
        let z: Vec<f64> = (0..100).map(|t| (t as f64).sin()).collect();
        let r = granger_test(&x, &z, 2, 3).unwrap();
        assert!(r.degenerate);
    }

    #[test]
    fn scan_all_orders_pairs_and_is_deterministic() {
        let m = lag3_pair(5);
        let cfg = ScanConfig { max_lag: 6, ar_order: 2 };
        let a = scan_all(&m, &cfg).unwrap();
        let b = scan_all(&m, &cfg).unwrap();
        assert_eq!(a, b);
        let order: Vec<(usize, usize)> = a.iter().map(|s| (s.effect, s.cause)).collect();
        assert_eq!(order, vec![(0, 1), (1, 0)]);
        let recs = scan_records(&a, m.names(), false);
        assert_eq!(recs[1].best_lag, 3);
        assert!(recs[1].curve.is_none());
    }
}
