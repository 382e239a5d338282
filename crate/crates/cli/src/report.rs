//! JSON report documents shared by the commands.

use kbnn::metrics::EvalResult;
use kbnn::trainer::{Checkpoint, TrainReport};
use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA: &str = "kbnn-report-v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation; the spread of a single value is 0.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub repeat: usize,
    pub seeds: RunSeeds,
    pub metrics: EvalResult,
    pub train_seconds: f64,
    pub mean_update_ms: f64,
    pub instances: usize,
    pub failed_updates: usize,
    pub checkpoints: Vec<Checkpoint>,
}

impl RunRecord {
    pub fn new(repeat: usize, seeds: RunSeeds, metrics: EvalResult, report: TrainReport, timing: bool) -> Self {
        let mut checkpoints = report.checkpoints;
        if !timing {
            checkpoints.iter_mut().for_each(|c| c.train_seconds = 0.0);
        }
        Self {
            repeat,
            seeds,
            metrics,
            train_seconds: if timing { report.train_seconds } else { 0.0 },
            mean_update_ms: if timing { 1e3 * report.mean_update_seconds } else { 0.0 },
            instances: report.instances,
            failed_updates: report.failed_updates,
            checkpoints,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub noise: u64,
    pub split: u64,
    pub init: u64,
    pub shuffle: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub rmse: Option<MeanStd>,
    pub nll: Option<MeanStd>,
    pub accuracy: Option<MeanStd>,
    pub train_seconds: Option<MeanStd>,
    pub failed_updates: usize,
}

impl Summary {
    pub fn of(runs: &[RunRecord]) -> Self {
        let pick = |f: &dyn Fn(&RunRecord) -> Option<f64>| -> Option<MeanStd> {
            let v: Vec<f64> = runs.iter().filter_map(f).collect();
            MeanStd::of(&v)
        };
        Self {
            runs: runs.len(),
            rmse: pick(&|r| Some(r.metrics.rmse)),
            nll: pick(&|r| Some(r.metrics.nll)),
            accuracy: pick(&|r| r.metrics.accuracy),
            train_seconds: pick(&|r| Some(r.train_seconds)),
            failed_updates: runs.iter().map(|r| r.failed_updates).sum(),
        }
    }
}

/// Versioned report wrapper; `body` holds the command-specific payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report<B> {
    pub schema: String,
    pub command: String,
    #[serde(flatten)]
    pub body: B,
}

impl<B: Serialize> Report<B> {
    pub fn new(command: &str, body: B) -> Self {
        Self {
            schema: REPORT_SCHEMA.to_string(),
            command: command.to_string(),
            body,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }
}
