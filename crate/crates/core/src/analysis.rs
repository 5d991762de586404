//! Efficiency and robustness metrics: spike rates, ASCI, operation counts,
//! the MAC-vs-ADD energy ratio and Gaussian-noise accuracy curves.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Result, SnnError};
use crate::snn::{LayerKind, LayerSpec, Network, NetworkConfig, PoissonEncoder, Shape3, SpikeRecord};
use crate::train::eval::evaluate;
use crate::Scalar;

/// Energy of one 32-bit floating-point multiply-accumulate, 45 nm (pJ).
pub const E_MAC_PJ: f64 = 4.6;
/// Energy of one 32-bit floating-point addition, 45 nm (pJ).
pub const E_ADD_PJ: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerTally {
    pub layer: usize,
    pub neurons: usize,
    pub spikes: u64,
}

/// Spike counts summed over a set of inferences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeTally {
    pub timesteps: usize,
    pub images: u64,
    pub input_neurons: usize,
    pub input_events: u64,
    /// One entry per spiking layer, in depth order.
    pub layers: Vec<LayerTally>,
}

impl SpikeTally {
    pub fn new<S: Scalar>(net: &Network<S>, timesteps: usize) -> Self {
        let shapes = net.shapes();
        Self {
            timesteps,
            images: 0,
            input_neurons: net.input_shape().len(),
            input_events: 0,
            layers: net
                .config()
                .spiking_layers()
                .into_iter()
                .map(|l| LayerTally {
                    layer: l,
                    neurons: shapes[l + 1].len(),
                    spikes: 0,
                })
                .collect(),
        }
    }

    pub fn add<S>(&mut self, record: &SpikeRecord<S>) {
        self.images += 1;
        self.input_events += record.input_events;
        for lt in &mut self.layers {
            if let Some(Some(a)) = record.layers.get(lt.layer) {
                lt.spikes += a.total_spikes();
            }
        }
    }

    fn find(&self, layer: usize) -> Result<&LayerTally> {
        self.layers
            .iter()
            .find(|l| l.layer == layer)
            .ok_or_else(|| invalid(format!("layer {layer} is not a spiking layer")))
    }
}

/// Spikes per neuron per inference in `layer`.
pub fn spike_rate(tally: &SpikeTally, layer: usize) -> Result<f64> {
    let lt = tally.find(layer)?;
    if lt.neurons == 0 {
        return Err(invalid("layer has zero neurons"));
    }
    if tally.images == 0 {
        return Ok(0.0);
    }
    Ok(lt.spikes as f64 / tally.images as f64 / lt.neurons as f64)
}

/// Rate of the Poisson input train, same units as [`spike_rate`].
pub fn input_spike_rate(tally: &SpikeTally) -> f64 {
    if tally.images == 0 || tally.input_neurons == 0 {
        return 0.0;
    }
    tally.input_events as f64 / tally.images as f64 / tally.input_neurons as f64
}

/// Average cumulative hidden-layer spike count per inference. Input events
/// are reported separately by [`SpikeStats::input_events_per_image`].
pub fn asci(tally: &SpikeTally) -> f64 {
    if tally.images == 0 {
        return 0.0;
    }
    let total: u64 = tally.layers.iter().map(|l| l.spikes).sum();
    total as f64 / tally.images as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRate {
    pub layer: usize,
    pub neurons: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeStats {
    pub timesteps: usize,
    pub images: u64,
    pub layers: Vec<LayerRate>,
    pub asci: f64,
    pub input_rate: f64,
    pub input_events_per_image: f64,
}

pub fn spike_stats(tally: &SpikeTally) -> Result<SpikeStats> {
    let layers = tally
        .layers
        .iter()
        .map(|l| {
            Ok(LayerRate {
                layer: l.layer,
                neurons: l.neurons,
                rate: spike_rate(tally, l.layer)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpikeStats {
        timesteps: tally.timesteps,
        images: tally.images,
        layers,
        asci: asci(tally),
        input_rate: input_spike_rate(tally),
        input_events_per_image: if tally.images == 0 {
            0.0
        } else {
            tally.input_events as f64 / tally.images as f64
        },
    })
}

/// Multiply-accumulates of one dense evaluation of a layer; zero for
/// pooling and dropout.
pub fn ann_ops(spec: &LayerSpec, input: Shape3) -> Result<u64> {
    let out = spec.output_shape(input)?;
    Ok(match spec.kind {
        LayerKind::Conv {
            c_in, k_h, k_w, c_out, ..
        } => (k_w * k_h * c_in * out.h * out.w * c_out) as u64,
        LayerKind::Linear { n_in, n_out } => (n_in * n_out) as u64,
        _ => 0,
    })
}

/// Accumulate operations of a spiking layer: `rate * ann_ops`.
pub fn snn_ops(ann_ops: u64, rate: f64) -> Result<f64> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(invalid(format!("spike rate {rate} must be finite and non-negative")));
    }
    Ok(rate * ann_ops as f64)
}

/// For each weighted layer, the rate of the spike population driving it:
/// the closest preceding spiking layer, or the input train for the first.
pub fn driving_rates(config: &NetworkConfig, tally: &SpikeTally) -> Result<Vec<(usize, f64)>> {
    let mut current = input_spike_rate(tally);
    let mut out = Vec::new();
    for (i, l) in config.layers.iter().enumerate() {
        if l.is_weighted() {
            out.push((i, current));
        }
        if l.spiking {
            current = spike_rate(tally, i)?;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerOps {
    pub layer: usize,
    pub ops: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub ann_layers: Vec<LayerOps>,
    pub snn_layers: Vec<(usize, f64, f64)>,
    pub e_mac_pj: f64,
    pub e_add_pj: f64,
    pub ann_ops_total: f64,
    pub snn_ops_total: f64,
    pub ann_energy_pj: f64,
    pub snn_energy_pj: f64,
    /// `E_ANN / E_SNN`; memory access is not modelled.
    pub alpha: f64,
}

/// Energy of the dense parent ANN relative to the compressed SNN whose
/// measured activity is in `tally`.
pub fn energy_ratio(
    parent: &NetworkConfig,
    compressed: &NetworkConfig,
    tally: &SpikeTally,
) -> Result<EnergyReport> {
    let pshapes = parent.shapes()?;
    let cshapes = compressed.shapes()?;
    let mut ann_layers = Vec::new();
    for (i, l) in parent.layers.iter().enumerate() {
        if l.is_weighted() {
            ann_layers.push(LayerOps {
                layer: i,
                ops: ann_ops(l, pshapes[i])? as f64,
            });
        }
    }
    let mut snn_layers = Vec::new();
    for (i, rate) in driving_rates(compressed, tally)? {
        let dense = ann_ops(&compressed.layers[i], cshapes[i])?;
        snn_layers.push((i, rate, snn_ops(dense, rate)?));
    }
    let ann_total: f64 = ann_layers.iter().map(|l| l.ops).sum();
    let snn_total: f64 = snn_layers.iter().map(|l| l.2).sum();
    if snn_total == 0.0 {
        return Err(SnnError::Degenerate("compressed network performs no operations".into()));
    }
    let ann_energy = ann_total * E_MAC_PJ;
    let snn_energy = snn_total * E_ADD_PJ;
    Ok(EnergyReport {
        ann_layers,
        snn_layers,
        e_mac_pj: E_MAC_PJ,
        e_add_pj: E_ADD_PJ,
        ann_ops_total: ann_total,
        snn_ops_total: snn_total,
        ann_energy_pj: ann_energy,
        snn_energy_pj: snn_energy,
        alpha: ann_energy / snn_energy,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub sigma: f64,
    pub accuracy: f64,
}

pub type NoiseCurve = Vec<NoisePoint>;

/// Accuracy under i.i.d. Gaussian pixel noise (added to normalized pixels,
/// then clamped to `[-1, 1]`) for each `sigma`. The same standard-normal
/// draws are scaled for every sigma.
pub fn noise_robustness<S: Scalar>(
    net: &Network<S>,
    data: &Dataset<S>,
    sigmas: &[f64],
    timesteps: usize,
    encoder: &PoissonEncoder,
    noise_seed: u64,
) -> Result<NoiseCurve> {
    if let Some(&s) = sigmas.iter().find(|&&s| !(s >= 0.0) || !s.is_finite()) {
        return Err(invalid(format!("noise sigma {s} must be finite and non-negative")));
    }
    let draws: Vec<Vec<f64>> = data
        .samples
        .iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
            rng.set_stream(s.id);
            (0..s.image.len()).map(|_| StandardNormal.sample(&mut rng)).collect()
        })
        .collect();
    sigmas
        .iter()
        .map(|&sigma| {
            let mut noisy = data.clone();
            if sigma > 0.0 {
                for (s, z) in noisy.samples.iter_mut().zip(&draws) {
                    for (p, &n) in s.image.iter_mut().zip(z) {
                        *p = S::of((p.as_f64() + sigma * n).clamp(-1.0, 1.0));
                    }
                }
            }
            let r = evaluate(net, &noisy, timesteps, encoder)?;
            Ok(NoisePoint {
                sigma,
                accuracy: r.accuracy,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_and_linear_op_counts() {
        let conv = LayerSpec::conv(3, 16, 3, 1, 1);
        assert_eq!(ann_ops(&conv, Shape3::new(3, 32, 32)).unwrap(), 442_368);
        assert_eq!(ann_ops(&LayerSpec::linear(100, 10), Shape3::flat(100)).unwrap(), 1000);
        assert_eq!(ann_ops(&LayerSpec::conv(1, 1, 1, 1, 0), Shape3::new(1, 1, 1)).unwrap(), 1);
        assert_eq!(ann_ops(&LayerSpec::avgpool(2), Shape3::new(3, 4, 4)).unwrap(), 0);
    }

    #[test]
    fn snn_ops_scale_with_rate() {
        assert_eq!(snn_ops(442_368, 0.0).unwrap(), 0.0);
        assert_eq!(snn_ops(442_368, 0.5).unwrap(), 221_184.0);
        assert_eq!(snn_ops(442_368, 2.0).unwrap(), 884_736.0);
        assert!(snn_ops(10, -0.1).is_err());
    }

    fn one_layer() -> NetworkConfig {
        NetworkConfig::new(Shape3::new(3, 32, 32), vec![LayerSpec::conv(3, 16, 3, 1, 1).non_spiking()])
            .unwrap()
    }

    fn tally_with_input_rate(cfg: &NetworkConfig, rate_num: u64, rate_den: u64) -> SpikeTally {
        let n = cfg.input.len() as u64;
        SpikeTally {
            timesteps: 10,
            images: rate_den,
            input_neurons: n as usize,
            input_events: n * rate_num,
            layers: vec![],
        }
    }

    #[test]
    fn pure_mac_add_ratio() {
        let cfg = one_layer();
        let r = energy_ratio(&cfg, &cfg, &tally_with_input_rate(&cfg, 1, 1)).unwrap();
        assert_eq!(r.alpha, 4.6 / 0.9);
    }

    #[test]
    fn half_rate_doubles_alpha() {
        let cfg = one_layer();
        let r = energy_ratio(&cfg, &cfg, &tally_with_input_rate(&cfg, 1, 2)).unwrap();
        assert!((r.alpha - 442_368.0 * 4.6 / (221_184.0 * 0.9)).abs() < 1e-12);
    }

    #[test]
    fn zero_activity_is_an_error() {
        let cfg = one_layer();
        assert!(energy_ratio(&cfg, &cfg, &tally_with_input_rate(&cfg, 0, 1)).is_err());
    }

    #[test]
    fn saturated_and_silent_rates() {
        let t = SpikeTally {
            timesteps: 10,
            images: 3,
            input_neurons: 1,
            input_events: 0,
            layers: vec![
                LayerTally { layer: 0, neurons: 4, spikes: 3 * 4 * 10 },
                LayerTally { layer: 2, neurons: 5, spikes: 0 },
            ],
        };
        assert_eq!(spike_rate(&t, 0).unwrap(), 10.0);
        assert_eq!(spike_rate(&t, 2).unwrap(), 0.0);
        assert!(spike_rate(&t, 1).is_err());
        assert_eq!(asci(&t), 40.0);
    }

    #[test]
    fn asci_counts_every_neuron() {
        let t = SpikeTally {
            timesteps: 4,
            images: 1,
            input_neurons: 1,
            input_events: 0,
            layers: vec![LayerTally { layer: 0, neurons: 5, spikes: 10 }],
        };
        assert_eq!(asci(&t), 10.0);
    }
}
