//! Timestep-accurate network simulation.
//!
//! Hidden conv/linear layers integrate their weighted input with
//! [`lif_update`](crate::snn::lif); the final layer only accumulates
//! `U_L += W_L * O_{L-1}` (no leak, threshold or reset). Pooling output is
//! handed to the next layer as a real value.

use crate::error::{check_len, Result};
use crate::snn::encode::SpikeTensor;
use crate::snn::layer::{
    avgpool_forward, conv_forward, linear_forward, ConvGeom, LayerKind, Shape3,
};
use crate::snn::lif::{lif_update, LifConfig, NeuronState};
use crate::snn::network::Network;
use crate::Scalar;

/// Per-layer activity of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerActivity<S> {
    /// Spikes per neuron over the run; empty for the final accumulator.
    pub spike_counts: Vec<u32>,
    /// Sum over steps of the pre-threshold potential (for the final layer,
    /// the sum of its running potential).
    pub accum: Vec<S>,
}

impl<S> LayerActivity<S> {
    pub fn total_spikes(&self) -> u64 {
        self.spike_counts.iter().map(|&c| c as u64).sum()
    }
}

/// Spike and potential bookkeeping of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeRecord<S> {
    pub timesteps: usize,
    /// Non-zero input events fed to the first layer.
    pub input_events: u64,
    /// Aligned with the network's layers; `None` for pooling and dropout.
    pub layers: Vec<Option<LayerActivity<S>>>,
}

impl<S> SpikeRecord<S> {
    /// Hidden-layer spikes summed over all layers.
    pub fn total_spikes(&self) -> u64 {
        self.layers.iter().flatten().map(LayerActivity::total_spikes).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput<S> {
    /// Final-layer potentials `U_L^T`.
    pub potentials: Vec<S>,
    pub record: SpikeRecord<S>,
}

/// Values captured for backpropagation through time.
#[derive(Clone, Debug, Default)]
pub(crate) struct Trace<S> {
    /// `inputs[t][l]`: what layer `l` received at step `t`.
    pub inputs: Vec<Vec<Vec<S>>>,
    /// `pre[t][l]`: pre-threshold potential of spiking layer `l` (empty otherwise).
    pub pre: Vec<Vec<Vec<S>>>,
}

pub(crate) struct RunOptions<'a, S> {
    /// Dropout masks aligned with layers (empty vectors for other layers).
    pub masks: Option<&'a [Vec<S>]>,
    pub trace: bool,
    /// Stop before integrating this layer and hand its weighted input to the
    /// sink instead.
    pub stop_at: Option<usize>,
}

impl<S> Default for RunOptions<'_, S> {
    fn default() -> Self {
        Self {
            masks: None,
            trace: false,
            stop_at: None,
        }
    }
}

/// Weighted input of a conv/linear layer into a fresh buffer.
pub(crate) fn weighted_input<S: Scalar>(
    kind: &LayerKind,
    geom: Option<&ConvGeom>,
    w: &[S],
    x: &[S],
    out: &mut [S],
) {
    out.iter_mut().for_each(|v| *v = S::zero());
    match kind {
        LayerKind::Conv { .. } => conv_forward(geom.expect("conv geometry"), w, x, out),
        LayerKind::Linear { n_in, .. } => linear_forward(*n_in, w, x, out),
        _ => unreachable!("weighted_input on an unweighted layer"),
    }
}

pub(crate) fn conv_geoms<S: Scalar>(net: &Network<S>) -> Vec<Option<ConvGeom>> {
    net.layers()
        .iter()
        .zip(net.shapes())
        .map(|(l, &s)| {
            if l.is_conv() {
                Some(ConvGeom::new(l, s).expect("validated network"))
            } else {
                None
            }
        })
        .collect()
}

/// Simulates sample `n` of `input`.
pub(crate) fn run_sample<S: Scalar>(
    net: &Network<S>,
    lif: &[Option<LifConfig<S>>],
    geoms: &[Option<ConvGeom>],
    input: &SpikeTensor,
    n: usize,
    opts: &RunOptions<'_, S>,
    sink: &mut dyn FnMut(&[S]),
) -> (ForwardOutput<S>, Option<Trace<S>>) {
    let layers = net.layers();
    let shapes = net.shapes();
    let timesteps = input.timesteps();
    let n_layers = layers.len();
    let last = n_layers - 1;
    let mut states: Vec<Option<NeuronState<S>>> = layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            if l.spiking || i == last {
                Some(NeuronState::new(shapes[i + 1].len()))
            } else {
                None
            }
        })
        .collect();
    let mut trace = opts.trace.then(|| Trace {
        inputs: Vec::with_capacity(timesteps),
        pre: Vec::with_capacity(timesteps),
    });
    let mut input_events = 0u64;
    let stop = opts.stop_at.unwrap_or(usize::MAX);

    for t in 0..timesteps {
        let mut cur: Vec<S> = input
            .frame(t, n)
            .iter()
            .map(|&s| {
                if s != 0 {
                    input_events += 1;
                }
                S::of(s as f64)
            })
            .collect();
        let mut step_inputs = Vec::new();
        let mut step_pre = Vec::new();
        for (l, layer) in layers.iter().enumerate() {
            if l > stop {
                break;
            }
            let mut out = vec![S::zero(); shapes[l + 1].len()];
            let mut pre_out = Vec::new();
            match &layer.kind {
                LayerKind::Conv { .. } | LayerKind::Linear { .. } => {
                    weighted_input(&layer.kind, geoms[l].as_ref(), &net.weights[l], &cur, &mut out);
                    if l == stop {
                        sink(&out);
                    } else if l == last {
                        let st = states[l].as_mut().expect("final state");
                        for ((u, a), &i) in st.u.iter_mut().zip(st.accum.iter_mut()).zip(&out) {
                            *u += i;
                            *a += *u;
                        }
                    } else {
                        let st = states[l].as_mut().expect("spiking state");
                        let cfg = lif[l].as_ref().expect("spiking layer config");
                        let weighted = std::mem::replace(&mut out, vec![S::zero(); shapes[l + 1].len()]);
                        if trace.is_some() {
                            pre_out = vec![S::zero(); weighted.len()];
                            lif_update(st, &weighted, cfg, &mut out, Some(&mut pre_out));
                        } else {
                            lif_update(st, &weighted, cfg, &mut out, None);
                        }
                    }
                }
                LayerKind::AvgPool { size } => avgpool_forward(*size, shapes[l], &cur, &mut out),
                LayerKind::Dropout { .. } => match opts.masks {
                    Some(m) => {
                        for ((o, &v), &k) in out.iter_mut().zip(&cur).zip(&m[l]) {
                            *o = v * k;
                        }
                    }
                    None => out.copy_from_slice(&cur),
                },
            }
            let prev = std::mem::replace(&mut cur, out);
            if trace.is_some() {
                step_pre.push(pre_out);
                step_inputs.push(prev);
            }
        }
        if let Some(tr) = trace.as_mut() {
            tr.inputs.push(step_inputs);
            tr.pre.push(step_pre);
        }
    }

    let potentials = states[last]
        .as_ref()
        .map(|s| s.u.clone())
        .unwrap_or_default();
    let record = SpikeRecord {
        timesteps,
        input_events,
        layers: states
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                s.map(|s| LayerActivity {
                    spike_counts: if i == last { Vec::new() } else { s.spike_count },
                    accum: s.accum,
                })
            })
            .collect(),
    };
    (ForwardOutput { potentials, record }, trace)
}

fn check_input<S: Scalar>(net: &Network<S>, input: &SpikeTensor) -> Result<()> {
    let want: Shape3 = net.input_shape();
    check_len("input spike frame", want.len(), input.shape().len())
}

/// Runs every sample of `input` for `input.timesteps()` steps (inference mode,
/// no dropout).
pub fn forward_pass<S: Scalar>(
    net: &Network<S>,
    input: &SpikeTensor,
) -> Result<Vec<ForwardOutput<S>>> {
    check_input(net, input)?;
    let lif = net.lif_configs()?;
    let geoms = conv_geoms(net);
    let opts = RunOptions::default();
    Ok((0..input.samples())
        .map(|n| run_sample(net, &lif, &geoms, input, n, &opts, &mut |_| {}).0)
        .collect())
}

/// Forward pass of a single sample with explicit dropout masks (training mode).
pub fn forward_pass_masked<S: Scalar>(
    net: &Network<S>,
    input: &SpikeTensor,
    n: usize,
    masks: &[Vec<S>],
) -> Result<ForwardOutput<S>> {
    check_input(net, input)?;
    let lif = net.lif_configs()?;
    let geoms = conv_geoms(net);
    let opts = RunOptions {
        masks: Some(masks),
        ..RunOptions::default()
    };
    Ok(run_sample(net, &lif, &geoms, input, n, &opts, &mut |_| {}).0)
}
