//! Gradual timestep reduction while training.
//!
//! Starting from a network converged at `t_start`, the simulation length is
//! cut by `step` timesteps, the network is trained for `epochs_per_iter`
//! epochs at the shorter length, and validation accuracy is measured. This
//! repeats while accuracy stays above `min_accuracy`; the last network that
//! cleared the bar is returned.

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::analysis::asci;
use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::snn::Network;
use crate::train::eval::evaluate;
use crate::train::snn::SnnTrainer;
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalPruneConfig {
    /// Timesteps removed per iteration.
    pub step: usize,
    pub epochs_per_iter: usize,
    /// Lowest acceptable validation accuracy, as a fraction.
    pub min_accuracy: f64,
    pub t_start: usize,
}

impl Default for TemporalPruneConfig {
    fn default() -> Self {
        Self {
            step: 1,
            epochs_per_iter: 1,
            min_accuracy: 0.5,
            t_start: 100,
        }
    }
}

impl TemporalPruneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step == 0 {
            return Err(invalid("timestep decrement must be at least 1"));
        }
        if self.epochs_per_iter == 0 {
            return Err(invalid("epochs per iteration must be at least 1"));
        }
        if !(self.min_accuracy > 0.0 && self.min_accuracy < 1.0) {
            return Err(invalid(format!(
                "minimum accuracy {} outside (0, 1)",
                self.min_accuracy
            )));
        }
        if self.t_start <= self.step {
            return Err(invalid(format!(
                "start timesteps {} must exceed the decrement {}",
                self.t_start, self.step
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyPoint {
    pub timesteps: usize,
    pub accuracy: f64,
    pub asci: f64,
}

pub type LatencyCurve = Vec<LatencyPoint>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalStatus {
    /// Accuracy fell to the bar; the previous checkpoint was returned.
    Completed,
    /// The next reduction would have reached zero timesteps.
    ReachedMinimum,
    /// The input network was already at or below the bar.
    GateFailed,
}

#[derive(Clone, Debug)]
pub struct TemporalOutcome<S> {
    pub net: Network<S>,
    /// Timesteps of the returned network.
    pub timesteps: usize,
    /// Validation accuracy of the returned network.
    pub accuracy: f64,
    pub curve: LatencyCurve,
    pub status: TemporalStatus,
    /// Accuracy of the input network at `t_start`.
    pub start_accuracy: f64,
}

/// Runs the reduction loop. `trainer` carries optimizer state and the
/// learning-rate schedule over from earlier training; thresholds are never
/// re-balanced. `on_iter` is called after every iteration with the recorded
/// point and the weights at that point.
pub fn temporal_prune<S: Scalar>(
    net: &Network<S>,
    trainer: &mut SnnTrainer<S>,
    train: &Dataset<S>,
    val: &Dataset<S>,
    cfg: &TemporalPruneConfig,
    mut on_iter: impl FnMut(&LatencyPoint, &Network<S>),
) -> Result<TemporalOutcome<S>> {
    cfg.validate()?;
    let encoder = trainer.encoder;
    let start = evaluate(net, val, cfg.t_start, &encoder)?.accuracy;
    let mut out = TemporalOutcome {
        net: net.clone(),
        timesteps: cfg.t_start,
        accuracy: start,
        curve: Vec::new(),
        status: TemporalStatus::GateFailed,
        start_accuracy: start,
    };
    if start <= cfg.min_accuracy {
        warn!(
            "accuracy {start:.4} at T={} does not clear the minimum {:.4}; nothing pruned",
            cfg.t_start, cfg.min_accuracy
        );
        return Ok(out);
    }
    let mut work = net.clone();
    let mut t_r = cfg.t_start;
    let mut acc = start;
    while acc > cfg.min_accuracy {
        if t_r <= cfg.step {
            out.status = TemporalStatus::ReachedMinimum;
            return Ok(out);
        }
        t_r -= cfg.step;
        for _ in 0..cfg.epochs_per_iter {
            trainer.train_epoch(&mut work, train, t_r)?;
        }
        let r = evaluate(&work, val, t_r, &encoder)?;
        acc = r.accuracy;
        let point = LatencyPoint {
            timesteps: t_r,
            accuracy: acc,
            asci: asci(&r.tally),
        };
        info!("T={t_r}: val acc {acc:.4}, asci {:.1}", point.asci);
        out.curve.push(point);
        on_iter(&point, &work);
        if acc > cfg.min_accuracy {
            out.net = work.clone();
            out.timesteps = t_r;
            out.accuracy = acc;
        }
    }
    out.status = TemporalStatus::Completed;
    Ok(out)
}
