//! Backpropagation through time over the unrolled LIF network.
//!
//! Per spiking neuron and step (`v` = pre-threshold potential):
//!
//! ```text
//! v_t = u_{t-1} + I_t
//! o_t = H(v_t - v_th)                      d o_t / d v_t := surrogate(v_t)
//! u_t = o_t ? v_t - v_th : leak * v_t      d u_t / d v_t  = o_t ? 1 : leak
//! ```
//!
//! The branch in `u_t` is a selection, so no gradient flows through the
//! reset condition itself. The loss is cross-entropy of `U_L^T`, which sums
//! the final layer's weighted input over every step.

use crate::error::{Result, SnnError};
use crate::snn::forward::{conv_geoms, run_sample, RunOptions};
use crate::snn::layer::{avgpool_backward, conv_backward, linear_backward, LayerKind};
use crate::snn::{Network, SpikeTensor};
use crate::train::loss::{argmax, softmax_cross_entropy};
use crate::train::surrogate::surrogate_grad;
use crate::Scalar;

/// Loss and weight gradients of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleGradient<S> {
    pub loss: S,
    pub correct: bool,
    /// Aligned with the network's layers; empty for unweighted layers.
    pub grads: Vec<Vec<S>>,
}

/// Gradient of the cross-entropy loss for sample `n` of `input`.
/// `masks` are per-layer dropout masks held fixed across all steps.
pub fn snn_sample_gradient<S: Scalar>(
    net: &Network<S>,
    input: &SpikeTensor,
    n: usize,
    label: usize,
    masks: Option<&[Vec<S>]>,
    slope: S,
) -> Result<SampleGradient<S>> {
    let lif = net.lif_configs()?;
    let geoms = conv_geoms(net);
    let opts = RunOptions {
        masks,
        trace: true,
        stop_at: None,
    };
    let (out, trace) = run_sample(net, &lif, &geoms, input, n, &opts, &mut |_| {});
    let trace = trace.expect("trace requested");
    let (loss, d_final) = softmax_cross_entropy(&out.potentials, label);
    if !loss.is_finite() {
        return Err(SnnError::Training {
            epoch: 0,
            reason: "non-finite loss".into(),
        });
    }
    let layers = net.layers();
    let shapes = net.shapes();
    let last = layers.len() - 1;
    let mut grads: Vec<Vec<S>> = net.weights.iter().map(|w| vec![S::zero(); w.len()]).collect();
    // dL/du_t carried from step t+1 into step t, per spiking layer
    let mut carry: Vec<Vec<S>> = layers
        .iter()
        .enumerate()
        .map(|(l, spec)| {
            if spec.spiking {
                vec![S::zero(); shapes[l + 1].len()]
            } else {
                Vec::new()
            }
        })
        .collect();

    for t in (0..input.timesteps()).rev() {
        let inputs = &trace.inputs[t];
        let pre = &trace.pre[t];
        let mut g_out: Vec<S> = d_final.clone();
        for l in (0..=last).rev() {
            let spec = &layers[l];
            let need_in = l > 0;
            let mut g_in = if need_in {
                vec![S::zero(); shapes[l].len()]
            } else {
                Vec::new()
            };
            match &spec.kind {
                LayerKind::Conv { .. } | LayerKind::Linear { .. } => {
                    let g_weighted: Vec<S> = if l == last {
                        g_out
                    } else {
                        let cfg = lif[l].expect("spiking layer");
                        let gv: Vec<S> = pre[l]
                            .iter()
                            .zip(&g_out)
                            .zip(&carry[l])
                            .map(|((&v, &go), &gu)| {
                                let fired = v > cfg.v_th;
                                let through = if fired { gu } else { gu * cfg.leak };
                                go * surrogate_grad(v, cfg.v_th, slope) + through
                            })
                            .collect();
                        carry[l].copy_from_slice(&gv);
                        gv
                    };
                    let gi = need_in.then_some(g_in.as_mut_slice());
                    match &spec.kind {
                        LayerKind::Conv { .. } => conv_backward(
                            geoms[l].as_ref().expect("conv geometry"),
                            &net.weights[l],
                            &inputs[l],
                            &g_weighted,
                            &mut grads[l],
                            gi,
                        ),
                        LayerKind::Linear { n_in, .. } => linear_backward(
                            *n_in,
                            &net.weights[l],
                            &inputs[l],
                            &g_weighted,
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
    }

    for g in grads.iter().flatten() {
        if !g.is_finite() {
            return Err(SnnError::Training {
                epoch: 0,
                reason: "non-finite gradient".into(),
            });
        }
    }
    Ok(SampleGradient {
        loss,
        correct: argmax(&out.potentials) == label,
        grads,
    })
}
