//! Percentile threshold balancing for ANN-to-SNN conversion.

use std::cmp::Ordering;

use crate::data::Dataset;
use crate::error::{invalid, Result, SnnError};
use crate::snn::forward::{conv_geoms, run_sample, RunOptions};
use crate::snn::{LifConfig, Network, PoissonEncoder, ThresholdSet};
use crate::Scalar;

/// Percentile used for every spiking layer.
pub const BALANCE_PERCENTILE: f64 = 99.9;

fn cmp<S: Scalar>(a: &S, b: &S) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// `p`-th percentile (0..=100) with linear interpolation between order
/// statistics, i.e. rank `p/100 * (n-1)`. Reorders `values`.
pub fn percentile<S: Scalar>(values: &mut [S], p: f64) -> Result<S> {
    if values.is_empty() {
        return Err(invalid("percentile of an empty set"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(invalid(format!("percentile {p} outside [0, 100]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SnnError::Degenerate("non-finite pre-activation".into()));
    }
    let rank = p / 100.0 * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    let (_, &mut lo_v, upper) = values.select_nth_unstable_by(lo, cmp);
    if frac == 0.0 || upper.is_empty() {
        return Ok(lo_v);
    }
    let hi_v = upper.iter().copied().min_by(cmp).expect("non-empty");
    Ok(lo_v + (hi_v - lo_v) * S::of(frac))
}

/// Sets each spiking layer's threshold to the given percentile of its
/// weighted-input distribution `W_l * O_{l-1}^t`, pooled over all
/// calibration samples, timesteps and neurons. Layers are balanced in depth
/// order, each with all earlier thresholds already fixed.
pub fn balance_thresholds<S: Scalar>(
    net: &Network<S>,
    calibration: &Dataset<S>,
    timesteps: usize,
    encoder: &PoissonEncoder,
    pct: f64,
) -> Result<ThresholdSet<S>> {
    if calibration.is_empty() {
        return Err(invalid("empty calibration set"));
    }
    if timesteps == 0 {
        return Err(invalid("timestep count must be positive"));
    }
    let spiking = net.config().spiking_layers();
    let geoms = conv_geoms(net);
    let shape = net.input_shape();
    let placeholder = LifConfig::new(net.leak, S::one())?;
    let mut lif: Vec<Option<LifConfig<S>>> = net
        .layers()
        .iter()
        .map(|l| l.spiking.then_some(placeholder))
        .collect();
    let encoded = calibration
        .samples
        .iter()
        .map(|s| encoder.encode(&s.image, shape, timesteps, s.id))
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::with_capacity(spiking.len());
    for &layer in &spiking {
        let opts = RunOptions {
            stop_at: Some(layer),
            ..RunOptions::default()
        };
        let mut pre: Vec<S> = Vec::new();
        for spikes in &encoded {
            run_sample(net, &lif, &geoms, spikes, 0, &opts, &mut |v| pre.extend_from_slice(v));
        }
        let th = percentile(&mut pre, pct)?;
        if !(th > S::zero()) {
            return Err(SnnError::Degenerate(format!(
                "layer {layer}: {pct} percentile of pre-activations is {th}, not positive"
            )));
        }
        lif[layer] = Some(LifConfig::new(net.leak, th)?);
        values.push(th);
    }
    Ok(ThresholdSet {
        values,
        percentile: pct,
    })
}
