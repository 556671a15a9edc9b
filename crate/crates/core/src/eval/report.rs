//! Experiment reports: aligned text tables and JSON documents.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::experiment::{Exp1Config, Exp2Config};
use crate::forecast::ModelKind;

pub const POOLING_NOTE: &str = "MAPE in min-max scaled units (floor applied to |truth|); \
model rows pool every test window of every dataset and seed; mean_dataset_diff_pct averages \
per-dataset differences within each seed, then across seeds";

pub const EXP2_NOTE: &str = "MAPE in min-max scaled units (floor applied to |truth|); \
each row averages target test MAPE over models and seeds";

/// Relative improvement of the synchronized variant, in percent.
pub fn diff_pct(mape_nonsync: f64, mape_sync: f64) -> f64 {
    if mape_nonsync == 0.0 {
        0.0
    } else {
        100.0 * (mape_nonsync - mape_sync) / mape_nonsync
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub cause: String,
    pub effect: String,
    pub lag: usize,
    /// Lag of the generating edge between the same variables, if any.
    pub true_lag: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetModelResult {
    pub model: ModelKind,
    pub mape_nonsync: f64,
    pub mape_sync: f64,
    pub diff_pct: f64,
    pub windows_nonsync: usize,
    pub windows_sync: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetResult {
    pub seed: u64,
    pub dataset: usize,
    pub spec: String,
    pub pairs: Vec<PairSummary>,
    /// Set when the dataset produced no usable pairs.
    pub skipped: Option<String>,
    pub models: Vec<DatasetModelResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub model: ModelKind,
    pub datasets: usize,
    pub mean_dataset_diff_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: ModelKind,
    pub mape_nonsync: f64,
    pub mape_sync: f64,
    pub diff_pct: f64,
    pub mean_dataset_diff_pct: f64,
    pub windows_nonsync: usize,
    pub windows_sync: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Report {
    pub pooling: String,
    pub config: Exp1Config,
    pub seeds: Vec<u64>,
    pub models: Vec<ModelSummary>,
    pub per_seed: Vec<SeedSummary>,
    pub datasets: Vec<DatasetResult>,
}

impl Exp1Report {
    pub(crate) fn assemble(config: &Exp1Config, datasets: Vec<DatasetResult>) -> Self {
        let mut per_seed = Vec::new();
        let mut models = Vec::new();
        for &model in &config.models {
            let rows = || {
                datasets
                    .iter()
                    .filter(|d| d.skipped.is_none())
                    .flat_map(|d| d.models.iter().filter(|m| m.model == model).map(move |m| (d.seed, m)))
            };
            let mut seed_means = Vec::new();
            for &seed in &config.seeds {
                let diffs: Vec<f64> = rows().filter(|(s, _)| *s == seed).map(|(_, m)| m.diff_pct).collect();
                if diffs.is_empty() {
                    continue;
                }
                let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
                seed_means.push(mean);
                per_seed.push(SeedSummary {
                    seed,
                    model,
                    datasets: diffs.len(),
                    mean_dataset_diff_pct: mean,
                });
            }
            let (mut sum_ns, mut sum_s, mut n_ns, mut n_s) = (0.0, 0.0, 0, 0);
            for (_, m) in rows() {
                sum_ns += m.mape_nonsync * m.windows_nonsync as f64;
                sum_s += m.mape_sync * m.windows_sync as f64;
                n_ns += m.windows_nonsync;
                n_s += m.windows_sync;
            }
            let mape_nonsync = if n_ns > 0 { sum_ns / n_ns as f64 } else { 0.0 };
            let mape_sync = if n_s > 0 { sum_s / n_s as f64 } else { 0.0 };
            models.push(ModelSummary {
                model,
                mape_nonsync,
                mape_sync,
                diff_pct: diff_pct(mape_nonsync, mape_sync),
                mean_dataset_diff_pct: if seed_means.is_empty() {
                    0.0
                } else {
                    seed_means.iter().sum::<f64>() / seed_means.len() as f64
                },
                windows_nonsync: n_ns,
                windows_sync: n_s,
            });
        }
        Exp1Report {
            pooling: POOLING_NOTE.to_string(),
            config: config.clone(),
            seeds: config.seeds.clone(),
            models,
            per_seed,
            datasets,
        }
    }

    pub fn skipped(&self) -> impl Iterator<Item = &DatasetResult> {
        self.datasets.iter().filter(|d| d.skipped.is_some())
    }

    /// Largest disagreement between a stored `diff_pct` and its
    /// recomputation from the two stored MAPEs.
    pub fn diff_consistency_error(&self) -> f64 {
        let rows = self.models.iter().map(|m| (m.mape_nonsync, m.mape_sync, m.diff_pct)).chain(
            self.datasets
                .iter()
                .flat_map(|d| d.models.iter().map(|m| (m.mape_nonsync, m.mape_sync, m.diff_pct))),
        );
        rows.map(|(ns, s, d)| (diff_pct(ns, s) - d).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.pooling);
        let _ = writeln!(out, "# seeds: {:?}", self.seeds);
        let _ = writeln!(
            out,
            "{:<8} {:>12} {:>12} {:>10} {:>18}",
            "model", "MAPE (NS)", "MAPE (S)", "diff %", "mean dataset diff %"
        );
        for m in &self.models {
            let _ = writeln!(
                out,
                "{:<8} {:>12.4} {:>12.4} {:>10.2} {:>18.2}",
                m.model.as_str(),
                m.mape_nonsync,
                m.mape_sync,
                m.diff_pct,
                m.mean_dataset_diff_pct
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<6} {:<8} {:<6} {:<8} {:>12} {:>12} {:>10}",
            "seed", "dataset", "pairs", "model", "MAPE (NS)", "MAPE (S)", "diff %"
        );
        for d in &self.datasets {
            if let Some(reason) = &d.skipped {
                let _ = writeln!(out, "{:<6} {:<8} skipped: {reason}", d.seed, d.dataset);
                continue;
            }
            for m in &d.models {
                let _ = writeln!(
                    out,
                    "{:<6} {:<8} {:<6} {:<8} {:>12.4} {:>12.4} {:>10.2}",
                    d.seed,
                    d.dataset,
                    d.pairs.len(),
                    m.model.as_str(),
                    m.mape_nonsync,
                    m.mape_sync,
                    m.diff_pct
                );
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

/// Training regime of an Exp2 row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferVariant {
    PretrainedFinetuned,
    TargetOnly,
}

impl TransferVariant {
    pub fn label(self) -> &'static str {
        match self {
            TransferVariant::PretrainedFinetuned => "Pre-trained on source, fine-tuned on target",
            TransferVariant::TargetOnly => "Trained on target only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Row {
    pub variant: TransferVariant,
    pub synchronized: bool,
    /// Averaged over models and seeds.
    pub mape: f64,
    /// `(seed, model, mape)` entries the average is taken over.
    pub runs: Vec<(u64, ModelKind, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Report {
    pub note: String,
    pub config: Exp2Config,
    pub seeds: Vec<u64>,
    pub rows: Vec<Exp2Row>,
    pub source_pairs: Vec<usize>,
    pub target_pairs: Vec<Vec<PairSummary>>,
}

impl Exp2Report {
    pub fn row(&self, variant: TransferVariant, synchronized: bool) -> Option<&Exp2Row> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.synchronized == synchronized)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.note);
        let _ = writeln!(out, "# seeds: {:?}", self.seeds);
        let _ = writeln!(out, "{:<46} {:<18} {:>10}", "training", "pairs", "MAPE");
        for r in &self.rows {
            let kind = if r.synchronized { "synchronized" } else { "non-synchronized" };
            let _ = writeln!(out, "{:<46} {:<18} {:>10.4}", r.variant.label(), kind, r.mape);
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}
