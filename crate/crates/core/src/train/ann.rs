//! Iso-architecture ReLU network used for pre-training before conversion.
//! Every spiking layer of the SNN is a ReLU layer here; pooling and dropout
//! are shared.

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Augment, Dataset, Sample};
use crate::error::{invalid, Result, SnnError};
use crate::snn::forward::{conv_geoms, weighted_input};
use crate::snn::layer::{
    avgpool_backward, avgpool_forward, conv_backward, linear_backward, ConvGeom, LayerKind,
};
use crate::snn::Network;
use crate::train::loss::{argmax, softmax_cross_entropy};
use crate::train::optim::{step_lr, Sgd};
use crate::train::snn::dropout_masks;
use crate::train::EpochLog;
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnTrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Divide the learning rate by 10 every this many epochs. `None` scales
    /// the reference cadence (every 100 of 300 epochs) to the epoch budget.
    pub lr_drop_every: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub augment: Option<Augment>,
    pub seed: u64,
}

impl Default for AnnTrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            lr_drop_every: None,
            epochs: 300,
            batch_size: 64,
            augment: Some(Augment { pad: 4, hflip: true }),
            seed: 0,
        }
    }
}

impl AnnTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(invalid("ann lr must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        Ok(())
    }

    pub fn drop_every(&self) -> usize {
        self.lr_drop_every.unwrap_or_else(|| self.epochs.div_ceil(3)).max(1)
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        step_lr(self.lr, 0.1, self.drop_every(), epoch)
    }
}

struct AnnCache<S> {
    inputs: Vec<Vec<S>>,
    /// Pre-activation of hidden weighted layers (empty otherwise).
    pre: Vec<Vec<S>>,
    logits: Vec<S>,
}

fn ann_forward<S: Scalar>(
    net: &Network<S>,
    geoms: &[Option<ConvGeom>],
    image: &[S],
    masks: Option<&[Vec<S>]>,
) -> AnnCache<S> {
    let layers = net.layers();
    let shapes = net.shapes();
    let last = layers.len() - 1;
    let mut inputs = Vec::with_capacity(layers.len());
    let mut pre = Vec::with_capacity(layers.len());
    let mut cur = image.to_vec();
    for (l, spec) in layers.iter().enumerate() {
        let mut out = vec![S::zero(); shapes[l + 1].len()];
        let mut p = Vec::new();
        match &spec.kind {
            LayerKind::Conv { .. } | LayerKind::Linear { .. } => {
                weighted_input(&spec.kind, geoms[l].as_ref(), &net.weights[l], &cur, &mut out);
                if l != last {
                    p = out.clone();
                    out.iter_mut().for_each(|v| *v = v.max(S::zero()));
                }
            }
            LayerKind::AvgPool { size } => avgpool_forward(*size, shapes[l], &cur, &mut out),
            LayerKind::Dropout { .. } => match masks {
                Some(m) => {
                    for ((o, &v), &k) in out.iter_mut().zip(&cur).zip(&m[l]) {
                        *o = v * k;
                    }
                }
                None => out.copy_from_slice(&cur),
            },
        }
        pre.push(p);
        inputs.push(std::mem::replace(&mut cur, out));
    }
    AnnCache {
        inputs,
        pre,
        logits: cur,
    }
}

/// Logits of the ReLU network for one image (inference mode).
pub fn ann_logits<S: Scalar>(net: &Network<S>, image: &[S]) -> Vec<S> {
    let geoms = conv_geoms(net);
    ann_forward(net, &geoms, image, None).logits
}

/// Cross-entropy loss, correctness and weight gradients of one sample.
pub fn ann_sample_gradient<S: Scalar>(
    net: &Network<S>,
    image: &[S],
    label: usize,
    masks: Option<&[Vec<S>]>,
) -> (S, bool, Vec<Vec<S>>) {
    let geoms = conv_geoms(net);
    let cache = ann_forward(net, &geoms, image, masks);
    let (loss, mut g_out) = softmax_cross_entropy(&cache.logits, label);
    let layers = net.layers();
    let shapes = net.shapes();
    let last = layers.len() - 1;
    let mut grads: Vec<Vec<S>> = net.weights.iter().map(|w| vec![S::zero(); w.len()]).collect();
    for l in (0..=last).rev() {
        let need_in = l > 0;
        let mut g_in = if need_in {
            vec![S::zero(); shapes[l].len()]
        } else {
            Vec::new()
        };
        match &layers[l].kind {
            LayerKind::Conv { .. } | LayerKind::Linear { .. } => {
                if l != last {
                    for (g, &p) in g_out.iter_mut().zip(&cache.pre[l]) {
                        if p <= S::zero() {
                            *g = S::zero();
                        }
                    }
                }
                let gi = need_in.then_some(g_in.as_mut_slice());
                match &layers[l].kind {
                    LayerKind::Conv { .. } => conv_backward(
                        geoms[l].as_ref().expect("conv geometry"),
                        &net.weights[l],
                        &cache.inputs[l],
                        &g_out,
                        &mut grads[l],
                        gi,
                    ),
                    LayerKind::Linear { n_in, .. } => linear_backward(
                        *n_in,
                        &net.weights[l],
                        &cache.inputs[l],
                        &g_out,
                        &mut grads[l],
                        gi,
                    ),
                    _ => unreachable!(),
                }
            }
            LayerKind::AvgPool { size } => {
                if need_in {
                    avgpool_backward(*size, shapes[l], &g_out, &mut g_in);
                }
            }
            LayerKind::Dropout { .. } => {
                if need_in {
                    match masks {
                        Some(m) => {
                            for ((gi, &go), &k) in g_in.iter_mut().zip(&g_out).zip(&m[l]) {
                                *gi = go * k;
                            }
                        }
                        None => g_in.copy_from_slice(&g_out),
                    }
                }
            }
        }
        g_out = g_in;
    }
    (loss, argmax(&cache.logits) == label, grads)
}

/// `(accuracy, mean loss)` of the ReLU network.
pub fn evaluate_ann<S: Scalar>(net: &Network<S>, data: &Dataset<S>) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(invalid("cannot evaluate on an empty dataset"));
    }
    let geoms = conv_geoms(net);
    let per: Vec<(bool, f64)> = data
        .samples
        .par_iter()
        .map(|s| {
            let c = ann_forward(net, &geoms, &s.image, None);
            let (loss, _) = softmax_cross_entropy(&c.logits, s.label);
            (argmax(&c.logits) == s.label, loss.as_f64())
        })
        .collect();
    let correct = per.iter().filter(|p| p.0).count();
    let loss: f64 = per.iter().map(|p| p.1).sum();
    Ok((correct as f64 / data.len() as f64, loss / data.len() as f64))
}

/// SGD-with-momentum training of the ReLU network, in place.
pub fn train_ann<S: Scalar>(
    net: &mut Network<S>,
    train: &Dataset<S>,
    val: Option<&Dataset<S>>,
    cfg: &AnnTrainConfig,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if cfg.epochs > 0 && train.is_empty() {
        return Err(invalid("empty training set"));
    }
    let mut opt = Sgd::new(&net.weights, cfg.momentum, cfg.weight_decay);
    let shape = net.input_shape();
    let use_masks = net.config().has_dropout();
    let mut log = Vec::new();
    for epoch in 0..cfg.epochs {
        let lr = S::of(cfg.lr_at(epoch));
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(0xa11_0000 + epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample<S>> = chunk.iter().map(|&i| &train.samples[i]).collect();
            let per: Vec<(S, bool, Vec<Vec<S>>)> = batch
                .par_iter()
                .map(|s| {
                    let stream = ((epoch as u64 + 1) << 40) ^ s.id;
                    let image = match cfg.augment {
                        Some(aug) => {
                            let mut r = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xa06);
                            r.set_stream(stream);
                            aug.apply(&s.image, shape, &mut r)
                        }
                        None => s.image.clone(),
                    };
                    let masks = use_masks.then(|| dropout_masks(net, cfg.seed, stream));
                    ann_sample_gradient(net, &image, s.label, masks.as_deref())
                })
                .collect();
            let mut grads: Vec<Vec<S>> =
                net.weights.iter().map(|w| vec![S::zero(); w.len()]).collect();
            for (loss, ok, g) in per {
                loss_sum += loss.as_f64();
                correct += ok as usize;
                for (acc, gl) in grads.iter_mut().zip(&g) {
                    for (a, &v) in acc.iter_mut().zip(gl) {
                        *a += v;
                    }
                }
            }
            let scale = S::one() / S::of(batch.len() as f64);
            grads.iter_mut().flatten().for_each(|v| *v *= scale);
            opt.step(&mut net.weights, &grads, lr);
        }
        if !loss_sum.is_finite() || net.weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(SnnError::Training {
                epoch,
                reason: "ANN loss diverged".into(),
            });
        }
        log.push(EpochLog::new(
            epoch,
            "train",
            loss_sum / train.len() as f64,
            correct as f64 / train.len() as f64,
        ));
        if let Some(v) = val.filter(|v| !v.is_empty()) {
            let (acc, loss) = evaluate_ann(net, v)?;
            log.push(EpochLog::new(epoch, "val", loss, acc));
        }
        if let Some(last) = log.last() {
            info!("ann epoch {epoch}: {} loss {:.4} acc {:.4}", last.split, last.loss, last.accuracy);
        }
    }
    Ok(log)
}
