//! Sequential training: one forward and one backward pass per instance.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backward::backward_with_noise;
use crate::datasets::{Dataset, Task};
use crate::error::{KbnnError, Result};
use crate::forward::forward;
use crate::metrics::{evaluate, EvalResult};
use crate::network::{NetworkState, PriorSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub epochs: usize,
    pub shuffle_each_epoch: bool,
    /// Prior weight variance used when the network is initialised.
    pub prior_variance: T,
    /// Observation noise variance on the standardized target scale.
    pub observation_noise: T,
    /// Evaluate every this many processed instances.
    pub eval_every: Option<usize>,
    /// Extra evaluation points, in processed instances.
    pub checkpoints: Vec<usize>,
    pub seed: u64,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            epochs: 1,
            shuffle_each_epoch: true,
            prior_variance: T::one(),
            observation_noise: T::zero(),
            eval_every: None,
            checkpoints: Vec::new(),
            seed: 0,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(KbnnError::Config("epochs must be at least 1".into()));
        }
        if !(self.prior_variance > T::zero()) {
            return Err(KbnnError::Config("prior variance must be positive".into()));
        }
        if !(self.observation_noise >= T::zero()) {
            return Err(KbnnError::Config("observation noise must be non-negative".into()));
        }
        if self.eval_every == Some(0) {
            return Err(KbnnError::Config("eval_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn prior(&self) -> PriorSpec<T> {
        PriorSpec {
            weight_variance: self.prior_variance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub instances: usize,
    pub epoch: usize,
    /// Training time up to this point, evaluation excluded.
    pub train_seconds: f64,
    pub metrics: EvalResult,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub checkpoints: Vec<Checkpoint>,
    pub train_seconds: f64,
    pub instances: usize,
    pub failed_updates: usize,
    pub mean_update_seconds: f64,
}

/// Line-delimited JSON progress records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Progress {
    Checkpoint(Checkpoint),
    UpdateFailed { instance: usize, epoch: usize, error: String },
    EpochDone { epoch: usize, instances: usize, train_seconds: f64 },
}

impl Progress {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("progress records serialize")
    }
}

/// Single online update. On error the network is left untouched.
pub fn update_one<T: Scalar>(net: &mut NetworkState<T>, x: &[T], y: &[T], observation_noise: T) -> Result<Duration> {
    let start = Instant::now();
    let (_, cache) = forward(net, x)?;
    *net = backward_with_noise(net, &cache, y, observation_noise)?;
    Ok(start.elapsed())
}

/// Trains on `data` in order (or reshuffled each epoch when configured),
/// evaluating on `eval` at the configured checkpoints and once at the end.
/// Failed updates are skipped and counted.
pub fn train<T: Scalar>(
    net: &NetworkState<T>,
    data: &Dataset<T>,
    cfg: &TrainConfig<T>,
    eval: Option<&Dataset<T>>,
    mut on_progress: impl FnMut(&Progress),
) -> Result<(NetworkState<T>, TrainReport)> {
    cfg.validate()?;
    if !data.is_empty() && (data.input_dim() != net.input_dim || data.output_dim() != net.output_dim) {
        return Err(KbnnError::Config(format!(
            "data has {} inputs and {} outputs, network expects {} and {}",
            data.input_dim(),
            data.output_dim(),
            net.input_dim,
            net.output_dim
        )));
    }
    let mut net = net.clone();
    let mut report = TrainReport::default();
    if data.is_empty() {
        return Ok((net, report));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let total = cfg.epochs * data.len();
    let mut update_time = Duration::ZERO;
    let mut train_time = Duration::ZERO;

    let mut processed = 0;
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle_each_epoch {
            order.shuffle(&mut rng);
        }
        let mut segment_start = Instant::now();
        for &i in &order {
            match update_one(&mut net, &data.x[i], &data.y[i], cfg.observation_noise) {
                Ok(latency) => update_time += latency,
                Err(e) => {
                    report.failed_updates += 1;
                    on_progress(&Progress::UpdateFailed {
                        instance: i,
                        epoch,
                        error: e.to_string(),
                    });
                }
            }
            processed += 1;
            let due = cfg.eval_every.is_some_and(|k| processed % k == 0) || cfg.checkpoints.contains(&processed);
            if due && processed != total {
                train_time += segment_start.elapsed();
                checkpoint(&net, eval, processed, epoch, train_time, &mut report, &mut on_progress)?;
                segment_start = Instant::now();
            }
        }
        train_time += segment_start.elapsed();
        on_progress(&Progress::EpochDone {
            epoch,
            instances: processed,
            train_seconds: train_time.as_secs_f64(),
        });
    }
    report.instances = processed;
    report.train_seconds = train_time.as_secs_f64();
    let succeeded = processed - report.failed_updates;
    if succeeded > 0 {
        report.mean_update_seconds = update_time.as_secs_f64() / succeeded as f64;
    }
    checkpoint(&net, eval, processed, cfg.epochs, train_time, &mut report, &mut on_progress)?;
    Ok((net, report))
}

fn checkpoint<T: Scalar>(
    net: &NetworkState<T>,
    eval: Option<&Dataset<T>>,
    instances: usize,
    epoch: usize,
    train_time: Duration,
    report: &mut TrainReport,
    on_progress: &mut impl FnMut(&Progress),
) -> Result<()> {
    let Some(eval) = eval.filter(|e| !e.is_empty()) else {
        return Ok(());
    };
    let metrics = evaluate(net, &eval.x, &eval.y, eval.task == Task::Classification)?;
    let cp = Checkpoint {
        instances,
        epoch,
        train_seconds: train_time.as_secs_f64(),
        metrics,
    };
    on_progress(&Progress::Checkpoint(cp.clone()));
    report.checkpoints.push(cp);
    Ok(())
}
