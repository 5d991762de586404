use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result, SnnError};
use crate::snn::layer::{LayerKind, LayerSpec, Shape3};
use crate::snn::lif::{LifConfig, DEFAULT_LEAK};
use crate::{cast_slice, Scalar};

/// Architecture description: the object every compression pass rewrites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input: Shape3,
    pub layers: Vec<LayerSpec>,
}

impl NetworkConfig {
    pub fn new(input: Shape3, layers: Vec<LayerSpec>) -> Result<Self> {
        let cfg = Self { input, layers };
        cfg.shapes()?;
        Ok(cfg)
    }

    /// Validates the layer stack and returns `shapes[l]` = input shape of
    /// layer `l`; the last entry is the network output shape.
    pub fn shapes(&self) -> Result<Vec<Shape3>> {
        let last = self
            .layers
            .last()
            .ok_or_else(|| invalid("network has no layers"))?;
        if !last.is_weighted() || last.spiking {
            return Err(invalid("the last layer must be a non-spiking conv or linear accumulator"));
        }
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut cur = self.input;
        if cur.is_empty() {
            return Err(invalid("empty input shape"));
        }
        shapes.push(cur);
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            if i + 1 < n && layer.is_weighted() && !layer.spiking {
                return Err(invalid(format!(
                    "layer {i}: only the final layer may be a non-spiking accumulator"
                )));
            }
            if !layer.is_weighted() && layer.spiking {
                return Err(invalid(format!("layer {i}: pooling/dropout layers cannot spike")));
            }
            cur = layer
                .output_shape(cur)
                .map_err(|e| invalid(format!("layer {i}: {e}")))?;
            shapes.push(cur);
        }
        Ok(shapes)
    }

    pub fn num_classes(&self) -> usize {
        self.shapes().map(|s| s.last().map_or(0, |o| o.len())).unwrap_or(0)
    }

    /// Indices of layers that own LIF membranes, in depth order.
    pub fn spiking_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.spiking)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn conv_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_conv())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn weighted_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_weighted())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn has_dropout(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l.kind, LayerKind::Dropout { rate } if rate > 0.0))
    }
}

/// Per-spiking-layer firing thresholds, in depth order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet<S> {
    pub values: Vec<S>,
    /// Percentile of the pre-activation distribution the values came from.
    pub percentile: f64,
}

/// Weights, thresholds and leak for a validated [`NetworkConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct Network<S> {
    config: NetworkConfig,
    shapes: Vec<Shape3>,
    /// One buffer per layer; empty for pooling and dropout layers.
    /// Conv: `[c_out][c_in][k_h][k_w]`, linear: `[n_out][n_in]`.
    pub weights: Vec<Vec<S>>,
    pub thresholds: Option<ThresholdSet<S>>,
    pub leak: S,
}

impl<S: Scalar> Network<S> {
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        let shapes = config.shapes()?;
        let weights = config
            .layers
            .iter()
            .map(|l| vec![S::zero(); l.param_count()])
            .collect();
        Ok(Self {
            config,
            shapes,
            weights,
            thresholds: None,
            leak: S::of(DEFAULT_LEAK),
        })
    }

    /// He-normal initialization, deterministic in `seed`.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (layer, w) in net.config.layers.iter().zip(net.weights.iter_mut()) {
            if w.is_empty() {
                continue;
            }
            let std = (2.0 / layer.fan_in() as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("finite std");
            for v in w.iter_mut() {
                *v = S::of(dist.sample(&mut rng));
            }
        }
        Ok(net)
    }

    pub fn from_parts(
        config: NetworkConfig,
        weights: Vec<Vec<S>>,
        thresholds: Option<ThresholdSet<S>>,
        leak: S,
    ) -> Result<Self> {
        let shapes = config.shapes()?;
        check_len("layer weight table", config.layers.len(), weights.len())?;
        for (l, w) in config.layers.iter().zip(&weights) {
            check_len("layer weights", l.param_count(), w.len())?;
        }
        let net = Self {
            config,
            shapes,
            weights,
            thresholds,
            leak,
        };
        if let Some(th) = &net.thresholds {
            net.check_thresholds(th)?;
        }
        LifConfig::new(leak, S::one())?;
        Ok(net)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.config.layers
    }

    /// `shapes()[l]` is the input shape of layer `l`.
    pub fn shapes(&self) -> &[Shape3] {
        &self.shapes
    }

    pub fn input_shape(&self) -> Shape3 {
        self.config.input
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().map_or(0, |s| s.len())
    }

    pub fn param_count(&self) -> usize {
        self.config.param_count()
    }

    pub fn set_leak(&mut self, leak: S) -> Result<()> {
        LifConfig::new(leak, S::one())?;
        self.leak = leak;
        Ok(())
    }

    fn check_thresholds(&self, th: &ThresholdSet<S>) -> Result<()> {
        check_len(
            "threshold set",
            self.config.spiking_layers().len(),
            th.values.len(),
        )?;
        for &v in &th.values {
            if !(v > S::zero()) || !v.is_finite() {
                return Err(invalid(format!("threshold {v} must be positive and finite")));
            }
        }
        Ok(())
    }

    pub fn set_thresholds(&mut self, th: ThresholdSet<S>) -> Result<()> {
        self.check_thresholds(&th)?;
        self.thresholds = Some(th);
        Ok(())
    }

    /// LIF configs aligned with `layers()`; `None` for layers without membranes.
    pub fn lif_configs(&self) -> Result<Vec<Option<LifConfig<S>>>> {
        let th = self.thresholds.as_ref().ok_or_else(|| {
            SnnError::Precondition("thresholds are not set; balance or assign them first".into())
        })?;
        let mut values = th.values.iter();
        self.config
            .layers
            .iter()
            .map(|l| {
                if l.spiking {
                    let v = *values.next().expect("validated threshold count");
                    LifConfig::new(self.leak, v).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect()
    }

    pub fn cast<T: Scalar>(&self) -> Network<T> {
        Network {
            config: self.config.clone(),
            shapes: self.shapes.clone(),
            weights: self.weights.iter().map(|w| cast_slice(w)).collect(),
            thresholds: self.thresholds.as_ref().map(|t| ThresholdSet {
                values: cast_slice(&t.values),
                percentile: t.percentile,
            }),
            leak: T::of(self.leak.as_f64()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> NetworkConfig {
        NetworkConfig::new(
            Shape3::new(1, 8, 8),
            vec![
                LayerSpec::conv(1, 4, 3, 1, 1),
                LayerSpec::avgpool(2),
                LayerSpec::conv(4, 6, 3, 1, 1),
                LayerSpec::dropout(0.1),
                LayerSpec::linear(6 * 16, 3).non_spiking(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn shapes_propagate() {
        let cfg = desk();
        let shapes = cfg.shapes().unwrap();
        assert_eq!(shapes[1], Shape3::new(4, 8, 8));
        assert_eq!(shapes[2], Shape3::new(4, 4, 4));
        assert_eq!(shapes[5], Shape3::flat(3));
        assert_eq!(cfg.num_classes(), 3);
        assert_eq!(cfg.spiking_layers(), vec![0, 2]);
        assert_eq!(cfg.param_count(), 36 + 216 + 288);
    }

    #[test]
    fn final_layer_must_accumulate() {
        let mut cfg = desk();
        cfg.layers.last_mut().unwrap().spiking = true;
        assert!(cfg.shapes().is_err());
        let mut cfg = desk();
        cfg.layers[0].spiking = false;
        assert!(cfg.shapes().is_err());
        let mut cfg = desk();
        cfg.layers.push(LayerSpec::dropout(0.1));
        assert!(cfg.shapes().is_err());
    }

    #[test]
    fn init_is_seeded() {
        let a = Network::<f32>::init(desk(), 5).unwrap();
        let b = Network::<f32>::init(desk(), 5).unwrap();
        let c = Network::<f32>::init(desk(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn thresholds_must_cover_spiking_layers() {
        let mut net = Network::<f64>::zeros(desk()).unwrap();
        assert!(net.lif_configs().is_err());
        assert!(net
            .set_thresholds(ThresholdSet { values: vec![1.0], percentile: 99.9 })
            .is_err());
        assert!(net
            .set_thresholds(ThresholdSet { values: vec![1.0, -1.0], percentile: 99.9 })
            .is_err());
        net.set_thresholds(ThresholdSet { values: vec![1.0, 2.0], percentile: 99.9 })
            .unwrap();
        let cfgs = net.lif_configs().unwrap();
        assert_eq!(cfgs[2].unwrap().v_th, 2.0);
        assert!(cfgs[1].is_none());
    }
}
