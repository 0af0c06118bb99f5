use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::EvalResult;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    /// Macro-F1 of the predictions made on the training batches.
    pub train_macro_f1: f64,
}

/// One training run of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub seed: u64,
    pub history: Vec<EpochStats>,
    /// Keyed by split name.
    pub results: BTreeMap<String, EvalResult>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub runs: Vec<ModelRun>,
    /// Macro-F1 across runs, keyed by split name.
    pub macro_f1: BTreeMap<String, SplitSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    /// Node counts per split.
    pub nodes: BTreeMap<String, usize>,
    pub models: BTreeMap<String, ModelSummary>,
}

impl RunReport {
    pub fn new(config_hash: impl Into<String>, seeds: Vec<u64>, nodes: BTreeMap<String, usize>) -> Self {
        Self { config_hash: config_hash.into(), seeds, nodes, models: BTreeMap::new() }
    }

    pub fn add_run(&mut self, model: &str, run: ModelRun) {
        let entry = self.models.entry(model.to_string()).or_default();
        entry.runs.push(run);
        let mut per_split: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &entry.runs {
            for (split, res) in &r.results {
                per_split.entry(split.clone()).or_default().push(res.macro_f1);
            }
        }
        entry.macro_f1 = per_split
            .into_iter()
            .map(|(s, v)| {
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let min = v.iter().copied().fold(f64::INFINITY, f64::min);
                let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (s, SplitSummary { mean, min, max })
            })
            .collect();
    }

    pub fn mean_macro_f1(&self, model: &str, split: &str) -> Option<f64> {
        self.models.get(model)?.macro_f1.get(split).map(|s| s.mean)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table with one row per model and one macro-F1 column
    /// (mean over runs, in percent, with the min-max range) per split.
    pub fn table(&self, splits: &[&str]) -> String {
        let mut out = format!("{:<14}", "model");
        for s in splits {
            out += &format!(" {:>22}", s);
        }
        out.push('\n');
        for (name, m) in &self.models {
            out += &format!("{name:<14}");
            for s in splits {
                match m.macro_f1.get(*s) {
                    Some(v) => out += &format!(" {:>8.2} [{:>5.2}, {:>5.2}]", 100.0 * v.mean, 100.0 * v.min, 100.0 * v.max),
                    None => out += &format!(" {:>22}", "-"),
                }
            }
            out.push('\n');
        }
        out
    }
}
