use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{backward_batch, batch_mse, forward_batch, NetworkParams, OptimizerKind};
use crate::error::RrnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Steps (number of completed updates) at which hooks fire.
    pub snapshot_schedule: Vec<usize>,
}

impl TrainConfig {
    pub fn new(total_steps: usize, seed: u64) -> Self {
        Self {
            total_steps,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::adam(),
            seed,
            snapshot_schedule: Vec::new(),
        }
    }
}

/// Produces training batches; input and target are the same stimuli.
pub trait StimulusSource {
    /// Overwrite every row of `batch` with a flattened retina image.
    fn fill(&mut self, batch: &mut Array2<f64>) -> crate::Result<()>;
}

/// Read-only observer called at scheduled steps.
pub trait TrainHook {
    fn on_snapshot(&mut self, step: usize, params: &NetworkParams) -> crate::Result<()>;
}

impl<F> TrainHook for F
where
    F: FnMut(usize, &NetworkParams) -> crate::Result<()>,
{
    fn on_snapshot(&mut self, step: usize, params: &NetworkParams) -> crate::Result<()> {
        self(step, params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetric {
    /// 1-based index of the update.
    pub step: usize,
    /// Batch MSE measured before the update.
    pub mse: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricLog {
    pub entries: Vec<StepMetric>,
}

impl MetricLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Mean batch MSE over entries `[start, end)` (by position).
    pub fn window_mean(&self, start: usize, end: usize) -> f64 {
        let slice = &self.entries[start.min(self.len())..end.min(self.len())];
        slice.iter().map(|e| e.mse).sum::<f64>() / slice.len().max(1) as f64
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    /// The loss or a gradient went non-finite. `last_good` holds the
    /// parameters before the failing update; no update was applied.
    #[error("training diverged at step {step}")]
    Diverged {
        step: usize,
        last_good: Box<NetworkParams>,
        log: MetricLog,
    },
    #[error(transparent)]
    Failed(#[from] RrnError),
}

/// Run `config.total_steps` optimizer updates on mini-batches from `source`.
pub fn train(
    mut params: NetworkParams,
    config: &TrainConfig,
    source: &mut dyn StimulusSource,
    hooks: &mut [&mut dyn TrainHook],
) -> Result<(NetworkParams, MetricLog), TrainError> {
    if config.batch_size == 0 {
        return Err(RrnError::Argument("batch size must be at least 1".into()).into());
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(RrnError::Argument("learning rate must be positive".into()).into());
    }
    let schedule: BTreeSet<usize> = config.snapshot_schedule.iter().copied().collect();
    let fire = |step: usize, params: &NetworkParams, hooks: &mut [&mut dyn TrainHook]| -> crate::Result<()> {
        if schedule.contains(&step) {
            for hook in hooks.iter_mut() {
                hook.on_snapshot(step, params)?;
            }
        }
        Ok(())
    };

    let mut optimizer = config.optimizer.build(&params, config.learning_rate);
    let mut log = MetricLog::default();
    let mut batch = Array2::zeros((config.batch_size, params.spec().retina_pixels()));

    for step in 1..=config.total_steps {
        fire(step - 1, &params, hooks)?;
        source.fill(&mut batch)?;
        let acts = match forward_batch(&params, batch.view()) {
            Ok(a) => a,
            Err(RrnError::Numeric { .. }) => {
                return Err(TrainError::Diverged {
                    step,
                    last_good: Box::new(params),
                    log,
                })
            }
            Err(e) => return Err(e.into()),
        };
        let mse = batch_mse(&acts.output().view(), &batch.view());
        let grads = backward_batch(&params, &acts, batch.view());
        let grads_finite = grads
            .iter()
            .all(|g| g.weights.iter().chain(g.bias.iter()).all(|v| v.is_finite()));
        if !mse.is_finite() || !grads_finite {
            return Err(TrainError::Diverged {
                step,
                last_good: Box::new(params),
                log,
            });
        }
        optimizer.step(&mut params, &grads);
        log.entries.push(StepMetric { step, mse });
    }
    fire(config.total_steps, &params, hooks)?;
    Ok((params, log))
}
