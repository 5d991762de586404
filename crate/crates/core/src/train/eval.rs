use rayon::prelude::*;

use crate::analysis::SpikeTally;
use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::snn::forward::{conv_geoms, run_sample, RunOptions};
use crate::snn::{Network, PoissonEncoder};
use crate::train::loss::{argmax, softmax_cross_entropy};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    /// Fraction of correctly classified samples.
    pub accuracy: f64,
    pub loss: f64,
    pub tally: SpikeTally,
}

/// Inference over a dataset. Each sample is encoded with its own id as the
/// stream, so repeated evaluations see identical spike trains.
pub fn evaluate<S: Scalar>(
    net: &Network<S>,
    data: &Dataset<S>,
    timesteps: usize,
    encoder: &PoissonEncoder,
) -> Result<EvalResult> {
    if data.is_empty() {
        return Err(invalid("cannot evaluate on an empty dataset"));
    }
    let lif = net.lif_configs()?;
    let geoms = conv_geoms(net);
    let shape = net.input_shape();
    let opts = RunOptions::default();
    let per_sample: Vec<Result<_>> = data
        .samples
        .par_iter()
        .map(|s| {
            let spikes = encoder.encode(&s.image, shape, timesteps, s.id)?;
            let (out, _) = run_sample(net, &lif, &geoms, &spikes, 0, &opts, &mut |_| {});
            let (loss, _) = softmax_cross_entropy(&out.potentials, s.label);
            Ok((argmax(&out.potentials) == s.label, loss.as_f64(), out.record))
        })
        .collect();
    let mut tally = SpikeTally::new(net, timesteps);
    let mut correct = 0usize;
    let mut loss = 0.0;
    for r in per_sample {
        let (ok, l, record) = r?;
        correct += ok as usize;
        loss += l;
        tally.add(&record);
    }
    Ok(EvalResult {
        accuracy: correct as f64 / data.len() as f64,
        loss: loss / data.len() as f64,
        tally,
    })
}
