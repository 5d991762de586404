use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::error::{invalid, Result, SnnError};
use crate::snn::{training_stream, LayerKind, Network, PoissonEncoder};
use crate::train::bptt::snn_sample_gradient;
use crate::train::eval::evaluate;
use crate::train::optim::{step_lr, Adam};
use crate::train::surrogate::DEFAULT_SURROGATE_SLOPE;
use crate::train::EpochLog;
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnnTrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    /// The learning rate halves every this many epochs.
    pub lr_halve_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub surrogate_slope: f64,
    pub seed: u64,
}

impl Default for SnnTrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 5e-4,
            lr_halve_every: 5,
            epochs: 20,
            batch_size: 32,
            surrogate_slope: DEFAULT_SURROGATE_SLOPE,
            seed: 0,
        }
    }
}

impl SnnTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(invalid("snn lr must be finite and non-negative"));
        }
        if !(self.surrogate_slope > 0.0) {
            return Err(invalid("surrogate slope must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        Ok(())
    }
}

/// Inverted-dropout masks for one sample, aligned with the layers. The same
/// masks are reused at every step of the sample's simulation.
pub fn dropout_masks<S: Scalar>(net: &Network<S>, seed: u64, stream: u64) -> Vec<Vec<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd809_0a5c_u64);
    rng.set_stream(stream);
    net.layers()
        .iter()
        .zip(net.shapes())
        .map(|(l, s)| match l.kind {
            LayerKind::Dropout { rate } if rate > 0.0 => {
                let keep = S::of(1.0 / (1.0 - rate));
                (0..s.len())
                    .map(|_| if rng.random::<f64>() < rate { S::zero() } else { keep })
                    .collect()
            }
            LayerKind::Dropout { .. } => vec![S::one(); s.len()],
            _ => Vec::new(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepStats<S> {
    pub loss: f64,
    pub correct: usize,
    /// Mean gradient over the batch, aligned with the layers.
    pub grads: Vec<Vec<S>>,
}

/// Surrogate-gradient trainer. Optimizer state and the epoch counter persist
/// across calls, so training can continue at a different timestep count.
#[derive(Clone, Debug)]
pub struct SnnTrainer<S> {
    pub cfg: SnnTrainConfig,
    pub encoder: PoissonEncoder,
    adam: Adam<S>,
    epoch: usize,
}

impl<S: Scalar> SnnTrainer<S> {
    pub fn new(net: &Network<S>, cfg: SnnTrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            encoder: PoissonEncoder::new(cfg.seed),
            adam: Adam::new(&net.weights, cfg.weight_decay),
            cfg,
            epoch: 0,
        })
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn current_lr(&self) -> f64 {
        step_lr(self.cfg.lr, 0.5, self.cfg.lr_halve_every, self.epoch)
    }

    /// Gradients over a batch, averaged, without touching the weights.
    pub fn batch_gradients(
        &self,
        net: &Network<S>,
        batch: &[&Sample<S>],
        timesteps: usize,
    ) -> Result<StepStats<S>> {
        if batch.is_empty() {
            return Err(invalid("empty batch"));
        }
        let shape = net.input_shape();
        let slope = S::of(self.cfg.surrogate_slope);
        let epoch = self.epoch;
        let use_masks = net.config().has_dropout();
        let per: Vec<Result<_>> = batch
            .par_iter()
            .map(|s| {
                let stream = training_stream(epoch, s.id);
                let spikes = self.encoder.encode(&s.image, shape, timesteps, stream)?;
                let masks = use_masks.then(|| dropout_masks(net, self.cfg.seed, stream));
                snn_sample_gradient(net, &spikes, 0, s.label, masks.as_deref(), slope)
            })
            .collect();
        let mut grads: Vec<Vec<S>> = net.weights.iter().map(|w| vec![S::zero(); w.len()]).collect();
        let mut loss = 0.0;
        let mut correct = 0;
        for r in per {
            let g = r.map_err(|e| match e {
                SnnError::Training { reason, .. } => SnnError::Training { epoch, reason },
                other => other,
            })?;
            loss += g.loss.as_f64();
            correct += g.correct as usize;
            for (acc, gl) in grads.iter_mut().zip(&g.grads) {
                for (a, &v) in acc.iter_mut().zip(gl) {
                    *a += v;
                }
            }
        }
        let scale = S::one() / S::of(batch.len() as f64);
        grads.iter_mut().flatten().for_each(|v| *v *= scale);
        Ok(StepStats {
            loss: loss / batch.len() as f64,
            correct,
            grads,
        })
    }

    /// One iteration of spike-based backpropagation: forward over all steps,
    /// backward through time, optimizer update.
    pub fn step(
        &mut self,
        net: &mut Network<S>,
        batch: &[&Sample<S>],
        timesteps: usize,
    ) -> Result<StepStats<S>> {
        let stats = self.batch_gradients(net, batch, timesteps)?;
        let lr = S::of(self.current_lr());
        self.adam.step(&mut net.weights, &stats.grads, lr);
        if net.weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(SnnError::Training {
                epoch: self.epoch,
                reason: "weights became non-finite".into(),
            });
        }
        Ok(stats)
    }

    /// One pass over `data` in a seeded shuffled order. Returns
    /// `(mean loss, accuracy)` on the training batches.
    pub fn train_epoch(
        &mut self,
        net: &mut Network<S>,
        data: &Dataset<S>,
        timesteps: usize,
    ) -> Result<(f64, f64)> {
        if data.is_empty() {
            return Err(invalid("empty training set"));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(0x5eed_0000 + self.epoch as u64);
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch: Vec<&Sample<S>> = chunk.iter().map(|&i| &data.samples[i]).collect();
            let st = self.step(net, &batch, timesteps)?;
            loss += st.loss * batch.len() as f64;
            correct += st.correct;
        }
        if !loss.is_finite() {
            return Err(SnnError::Training {
                epoch: self.epoch,
                reason: "loss became non-finite".into(),
            });
        }
        self.epoch += 1;
        Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
    }
}

/// Fine-tunes a converted network for `cfg.epochs` epochs at `timesteps`.
/// `on_epoch` sees every epoch's log lines and the current weights
/// (checkpoint hook).
pub fn train_snn<S: Scalar>(
    net: &mut Network<S>,
    train: &Dataset<S>,
    val: Option<&Dataset<S>>,
    timesteps: usize,
    cfg: &SnnTrainConfig,
    mut on_epoch: impl FnMut(&[EpochLog], &Network<S>),
) -> Result<Vec<EpochLog>> {
    let mut trainer = SnnTrainer::new(net, cfg.clone())?;
    let eval_encoder = PoissonEncoder::new(cfg.seed);
    let mut log = Vec::new();
    for epoch in 0..cfg.epochs {
        let (loss, acc) = trainer.train_epoch(net, train, timesteps)?;
        let mut lines = vec![EpochLog::new(epoch, "train", loss, acc)];
        if let Some(v) = val.filter(|v| !v.is_empty()) {
            let r = evaluate(net, v, timesteps, &eval_encoder)?;
            lines.push(EpochLog::new(epoch, "val", r.loss, r.accuracy));
        }
        info!(
            "snn epoch {epoch}: {}",
            lines.iter().map(|l| format!("{} loss {:.4} acc {:.4}", l.split, l.loss, l.accuracy)).collect::<Vec<_>>().join(", ")
        );
        on_epoch(&lines, net);
        log.extend(lines);
    }
    Ok(log)
}
