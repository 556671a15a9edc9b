//! Lag synchronization of cause-effect pairs and 3-channel window samples.
//!
//! A synchronized sample anchored at `t` holds, for context length `C`,
//! horizon `H` and pair lag `d`:
//!
//! | channel          | source indices          |
//! |------------------|-------------------------|
//! | `effect_ctx`     | effect `t-C .. t`       |
//! | `sync_cause_ctx` | cause `t-C-d .. t-d`    |
//! | `raw_cause_ctx`  | cause `t-C .. t`        |
//! | `target`         | effect `t .. t+H`       |
//!
//! The synchronized channel reaches `d` steps further back than the context,
//! so anchors start at `C + d` instead of imputing missing values. The
//! non-synchronized baseline keeps the same shapes with the raw cause in
//! both cause channels.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CauseEffectPair;
use crate::window::WindowSpec;

/// Delays `cause` by `delta` steps: `out[t] = cause[t - delta]`. The first
/// `delta` entries have no source and are `None`.
pub fn shift_cause(cause: &[f64], delta: usize) -> Result<Vec<Option<f64>>> {
    if delta >= cause.len() {
        return Err(Error::Invalid(format!(
            "shift of {delta} steps leaves nothing of a {}-step series",
            cause.len()
        )));
    }
    Ok((0..cause.len())
        .map(|t| t.checked_sub(delta).map(|s| cause[s]))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub anchor: usize,
    pub effect_ctx: Vec<f64>,
    pub sync_cause_ctx: Vec<f64>,
    pub raw_cause_ctx: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairProvenance {
    pub dataset: String,
    pub effect: String,
    pub cause: String,
    pub effect_index: usize,
    pub cause_index: usize,
    pub lag: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<WindowSample>,
    pub window: WindowSpec,
    pub provenance: PairProvenance,
    pub synchronized: bool,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn with_dataset(mut self, dataset: impl Into<String>) -> Self {
        self.provenance.dataset = dataset.into();
        self
    }

    fn subset(&self, range: std::ops::Range<usize>) -> SampleSet {
        SampleSet {
            samples: self.samples[range].to_vec(),
            window: self.window,
            provenance: self.provenance.clone(),
            synchronized: self.synchronized,
        }
    }

    /// Line-delimited JSON: a header object, then one sample per line.
    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> Result<()> {
        let header = serde_json::json!({
            "window": self.window,
            "provenance": self.provenance,
            "synchronized": self.synchronized,
            "samples": self.samples.len(),
        });
        let io = |e| Error::io("<samples>", e);
        writeln!(out, "{}", serde_json::to_string(&header)?).map_err(io)?;
        for s in &self.samples {
            writeln!(out, "{}", serde_json::to_string(s)?).map_err(io)?;
        }
        Ok(())
    }
}

fn provenance(pair: &CauseEffectPair<'_>) -> PairProvenance {
    PairProvenance {
        dataset: String::new(),
        effect: pair.effect_name.to_string(),
        cause: pair.cause_name.to_string(),
        effect_index: pair.effect_index,
        cause_index: pair.cause_index,
        lag: pair.lag,
    }
}

fn check_pair(pair: &CauseEffectPair<'_>, window: &WindowSpec, delta: usize) -> Result<usize> {
    window.validate()?;
    let steps = pair.effect.len();
    if pair.cause.len() != steps {
        return Err(Error::Shape(format!(
            "effect has {steps} steps, cause has {}",
            pair.cause.len()
        )));
    }
    let need = window.context + window.horizon + delta;
    if window.count(steps, delta) == 0 {
        return Err(Error::Insufficient(format!(
            "{steps} steps give no windows; need at least {need} (context {} + horizon {} + lag {delta})",
            window.context, window.horizon
        )));
    }
    Ok(steps)
}

/// Synchronized samples: one per anchor `t` in `C + d, C + d + stride, ..., T - H`.
pub fn build_samples(pair: &CauseEffectPair<'_>, window: &WindowSpec) -> Result<SampleSet> {
    let delta = pair.lag;
    let steps = check_pair(pair, window, delta)?;
    let shifted = shift_cause(pair.cause, delta)?;
    let (c, h) = (window.context, window.horizon);
    let samples = window
        .anchors(steps, delta)
        .map(|t| WindowSample {
            anchor: t,
            effect_ctx: pair.effect[t - c..t].to_vec(),
            sync_cause_ctx: shifted[t - c..t]
                .iter()
                .map(|v| v.expect("anchor rule keeps the shifted window inside the series"))
                .collect(),
            raw_cause_ctx: pair.cause[t - c..t].to_vec(),
            target: pair.effect[t..t + h].to_vec(),
        })
        .collect();
    Ok(SampleSet {
        samples,
        window: *window,
        provenance: provenance(pair),
        synchronized: true,
    })
}

/// Baseline with identical shapes: both cause channels carry the raw cause
/// context and anchors start at `C`.
pub fn build_samples_nonsync(pair: &CauseEffectPair<'_>, window: &WindowSpec) -> Result<SampleSet> {
    let steps = check_pair(pair, window, 0)?;
    let (c, h) = (window.context, window.horizon);
    let samples = window
        .anchors(steps, 0)
        .map(|t| {
            let raw = pair.cause[t - c..t].to_vec();
            WindowSample {
                anchor: t,
                effect_ctx: pair.effect[t - c..t].to_vec(),
                sync_cause_ctx: raw.clone(),
                raw_cause_ctx: raw,
                target: pair.effect[t..t + h].to_vec(),
            }
        })
        .collect();
    Ok(SampleSet {
        samples,
        window: *window,
        provenance: provenance(pair),
        synchronized: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub test: f64,
    pub validation: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            test: 0.2,
            validation: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSet {
    pub train: SampleSet,
    pub test: SampleSet,
    pub validation: SampleSet,
    pub purge_gap: usize,
}

/// Chronological split into contiguous train, test and validation blocks.
/// At each boundary enough samples are dropped that the anchors on either
/// side are more than `purge_gap` steps apart.
pub fn split(set: &SampleSet, ratios: &SplitRatios, purge_gap: usize) -> Result<SplitSet> {
    let r = [ratios.train, ratios.test, ratios.validation];
    if r.iter().any(|v| !(v.is_finite() && *v > 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("split ratios {r:?} must be positive and sum to 1")));
    }
    let n = set.len();
    let drop = purge_gap.div_ceil(set.window.stride);
    let usable = n.saturating_sub(2 * drop);
    let n_train = (usable as f64 * ratios.train).round() as usize;
    let n_test = (usable as f64 * ratios.test).round() as usize;
    let n_val = usable.saturating_sub(n_train + n_test);
    if n < 2 * drop + 3 || n_train == 0 || n_test == 0 || n_val == 0 {
        return Err(Error::Insufficient(format!(
            "{n} samples cannot fill three partitions with a purge of {drop} samples at each boundary"
        )));
    }
    let test_start = n_train + drop;
    let val_start = test_start + n_test + drop;
    Ok(SplitSet {
        train: set.subset(0..n_train),
        test: set.subset(test_start..test_start + n_test),
        validation: set.subset(val_start..val_start + n_val),
        purge_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair<'a>(effect: &'a [f64], cause: &'a [f64], lag: usize) -> CauseEffectPair<'a> {
        CauseEffectPair {
            effect_index: 1,
            cause_index: 0,
            effect_name: "x1",
            cause_name: "x0",
            effect,
            cause,
            lag,
        }
    }

    fn ramp(n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|t| scale * t as f64).collect()
    }

    #[test]
    fn shift_examples() {
        let c = [10.0, 20.0, 30.0, 40.0];
        assert_eq!(shift_cause(&c, 0).unwrap(), c.iter().map(|&v| Some(v)).collect::<Vec<_>>());
        assert_eq!(shift_cause(&c, 2).unwrap(), vec![None, None, Some(10.0), Some(20.0)]);
        assert!(shift_cause(&c, 4).is_err());
        let s = shift_cause(&c, 1).unwrap();
        for t in 1..4 {
            assert_eq!(s[t], Some(c[t - 1]));
        }
    }

    #[test]
    fn synchronized_counts_and_first_anchor() {
        let e = ramp(100, 1.0);
        let z = ramp(100, -1.0);
        let w = WindowSpec::new(30, 10, 1).unwrap();
        let s = build_samples(&pair(&e, &z, 20), &w).unwrap();
        assert_eq!(s.len(), 41);
        assert_eq!(s.samples[0].anchor, 50);
        assert!(s.synchronized);
        let first = &s.samples[0];
        assert_eq!(first.effect_ctx[0], 20.0);
        assert_eq!(first.sync_cause_ctx[0], -0.0);
        assert_eq!(first.raw_cause_ctx[0], -20.0);
        assert_eq!(first.target, ramp(60, 1.0)[50..60].to_vec());
    }

    #[test]
    fn nonsync_counts_and_shapes() {
        let e = ramp(100, 1.0);
        let z = ramp(100, 2.0);
        let w = WindowSpec::new(30, 10, 1).unwrap();
        let ns = build_samples_nonsync(&pair(&e, &z, 20), &w).unwrap();
        assert_eq!(ns.len(), 61);
        assert_eq!(ns.samples[0].anchor, 30);
        assert_eq!(ns.samples.last().unwrap().anchor, 90);
        assert!(!ns.synchronized);
        assert!(ns.samples.iter().all(|s| s.sync_cause_ctx == s.raw_cause_ctx));
        let s = build_samples(&pair(&e, &z, 20), &w).unwrap();
        let shape = |x: &WindowSample| (x.effect_ctx.len(), x.sync_cause_ctx.len(), x.raw_cause_ctx.len(), x.target.len());
        assert_eq!(shape(&s.samples[0]), shape(&ns.samples[0]));
    }

    #[test]
    fn zero_lag_channels_match() {
        let e = ramp(80, 1.0);
        let z = ramp(80, 3.0);
        let w = WindowSpec::new(10, 5, 2).unwrap();
        let s = build_samples(&pair(&e, &z, 0), &w).unwrap();
        assert!(s.samples.iter().all(|x| x.sync_cause_ctx == x.raw_cause_ctx));
    }

    #[test]
    fn short_series_names_minimum() {
        let e = ramp(59, 1.0);
        let w = WindowSpec::new(30, 10, 1).unwrap();
        let err = build_samples(&pair(&e, &e, 20), &w).unwrap_err().to_string();
        assert!(err.contains("at least 60"), "{err}");
    }

    #[test]
    fn noise_free_pair_is_proportional() {
        use crate::graph::enumerate_pairs;
        use crate::graph::{CausalGraph, GraphEdge, LagCorrection};
        use crate::rng::Seed;
        use crate::synthgen::{generate, CausalEdge, CausalSpec};
        // effect x1 = 0.7 * x0_{t-12}, no effect noise and no effect autoregression
        let spec = CausalSpec::new(
            2,
            vec![1.0, 0.0],
            vec![
                CausalEdge { cause: 0, effect: 0, lag: 1, coeff: 0.6 },
                CausalEdge { cause: 0, effect: 1, lag: 12, coeff: 0.7 },
            ],
        )
        .unwrap();
        let data = generate(&spec, 400, Seed(4)).unwrap();
        let g = CausalGraph {
            nodes: data.names().to_vec(),
            alpha: 0.01,
            correction: LagCorrection::None,
            edges: vec![GraphEdge { cause: 0, effect: 1, lag: 12, p_value: 0.0, f_stat: 1.0 }],
        };
        let pairs = enumerate_pairs(&g, &data).unwrap();
        let s = build_samples(&pairs[0], &WindowSpec::new(30, 10, 1).unwrap()).unwrap();
        for x in &s.samples {
            for (e, z) in x.effect_ctx.iter().zip(&x.sync_cause_ctx) {
                assert_eq!(*e, 0.7 * z);
            }
        }
    }

    fn numbered(n: usize, stride: usize) -> SampleSet {
        let e = ramp(n * stride + 40, 1.0);
        let w = WindowSpec::new(30, 10, stride).unwrap();
        let mut s = build_samples_nonsync(&pair(&e, &e, 0), &w).unwrap();
        s.samples.truncate(n);
        s
    }

    #[test]
    fn split_ratios_without_purge() {
        let s = split(&numbered(100, 1), &SplitRatios::default(), 0).unwrap();
        assert_eq!((s.train.len(), s.test.len(), s.validation.len()), (70, 20, 10));
    }

    #[test]
    fn split_purge_separates_partitions() {
        let s = split(&numbered(1000, 1), &SplitRatios::default(), 39).unwrap();
        let last_train = s.train.samples.last().unwrap().anchor;
        let first_test = s.test.samples[0].anchor;
        assert!(first_test - last_train > 39);
        assert!(s.validation.samples[0].anchor - s.test.samples.last().unwrap().anchor > 39);
        assert!(split(&numbered(10, 1), &SplitRatios::default(), 39).is_err());
    }

    #[test]
    fn jsonl_export_has_header_and_rows() {
        let s = numbered(5, 1);
        let mut buf = Vec::new();
        s.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        let row: WindowSample = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(row, s.samples[0]);
    }

    proptest! {
        #[test]
        fn shift_relation_holds(
            seed in any::<u64>(), n in 60usize..300, lag in 0usize..40,
            c in 1usize..20, h in 1usize..8, stride in 1usize..4,
        ) {
            use rand::Rng;
            let mut rng = crate::rng::Seed(seed).rng();
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let e: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = WindowSpec::new(c, h, stride).unwrap();
            let p = pair(&e, &z, lag);
            match build_samples(&p, &w) {
                Ok(s) => {
                    prop_assert_eq!(s.len(), w.count(n, lag));
                    for x in &s.samples {
                        let t = x.anchor;
                        for k in 0..c {
                            prop_assert_eq!(x.sync_cause_ctx[k], z[t - c - lag + k]);
                            prop_assert_eq!(x.raw_cause_ctx[k], z[t - c + k]);
                            prop_assert_eq!(x.effect_ctx[k], e[t - c + k]);
                        }
                        prop_assert_eq!(&x.target[..], &e[t..t + h]);
                    }
                }
                Err(_) => prop_assert_eq!(w.count(n, lag), 0),
            }
        }

        #[test]
        fn split_partitions_are_ordered_and_disjoint(n in 3usize..600, gap in 0usize..50, stride in 1usize..4) {
            let s = numbered(n, stride);
            let n = s.len();
            match split(&s, &SplitRatios::default(), gap) {
                Ok(sp) => {
                    let lt = sp.train.samples.last().unwrap().anchor;
                    let ft = sp.test.samples[0].anchor;
                    let lte = sp.test.samples.last().unwrap().anchor;
                    let fv = sp.validation.samples[0].anchor;
                    prop_assert!(lt < ft && lte < fv);
                    prop_assert!(ft - lt > gap && fv - lte > gap);
                    let usable = (sp.train.len() + sp.test.len() + sp.validation.len()) as f64;
                    prop_assert!((sp.train.len() as f64 - 0.7 * usable).abs() <= 1.0);
                    prop_assert!((sp.test.len() as f64 - 0.2 * usable).abs() <= 1.0);
                    prop_assert!((sp.validation.len() as f64 - 0.1 * usable).abs() <= 1.0);
                }
                Err(_) => {
                    let drop = gap.div_ceil(stride);
                    let usable = n.saturating_sub(2 * drop);
                    prop_assert!(usable < 10 || n < 2 * drop + 3, "n={n} usable={usable}");
                }
            }
        }
    }
}
