//! Unrolled LIF network built node by node on an autodiff tape.
//!
//! Hidden layers: `v = u + I`, spike when `v > th`, then `u = v - th` on a
//! spike and `u = leak * v` otherwise. The spike's derivative is the
//! triangular surrogate `slope * max(0, 1 - |v - th| / th)`. The last layer
//! accumulates its weighted input; the loss is softmax cross-entropy of the
//! accumulated potential.

use crate::autodiff::{Tape, Var};

#[derive(Clone, Debug)]
pub enum Layer {
    /// Square kernel; `h`, `w` are the input size.
    Conv {
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        h: usize,
        w: usize,
    },
    Linear { n_in: usize, n_out: usize },
    /// Window = stride = `size` over a `c x h x w` input.
    AvgPool { size: usize, c: usize, h: usize, w: usize },
    /// Fixed multiplicative mask.
    Mask(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct Model {
    pub layers: Vec<Layer>,
    /// Aligned with `layers`; empty for pooling and masks.
    pub weights: Vec<Vec<f64>>,
    /// One per hidden weighted layer, in order.
    pub thresholds: Vec<f64>,
    pub leak: f64,
    pub slope: f64,
}

pub struct Outcome {
    pub loss: f64,
    pub potentials: Vec<f64>,
    /// Aligned with `layers`.
    pub grads: Vec<Vec<f64>>,
    pub spikes: u64,
}

fn weighted(t: &mut Tape, layer: &Layer, w: &[Var], x: &[Var]) -> Vec<Var> {
    match *layer {
        Layer::Conv { c_in, c_out, k, stride, pad, h, w: wd } => {
            let ho = (h + 2 * pad - k) / stride + 1;
            let wo = (wd + 2 * pad - k) / stride + 1;
            let mut out = Vec::with_capacity(c_out * ho * wo);
            for co in 0..c_out {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut terms = Vec::new();
                        for ci in 0..c_in {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    let xi = x[(ci * h + iy as usize) * wd + ix as usize];
                                    let wi = w[((co * c_in + ci) * k + ky) * k + kx];
                                    terms.push(t.mul(wi, xi));
                                }
                            }
                        }
                        out.push(t.sum(&terms));
                    }
                }
            }
            out
        }
        Layer::Linear { n_in, n_out } => (0..n_out)
            .map(|o| {
                let terms: Vec<Var> = (0..n_in).map(|i| t.mul(w[o * n_in + i], x[i])).collect();
                t.sum(&terms)
            })
            .collect(),
        _ => unreachable!(),
    }
}

/// Runs `frames` (one input vector per step) and differentiates the loss.
pub fn run(model: &Model, frames: &[Vec<f64>], label: usize) -> Outcome {
    let mut t = Tape::new();
    let w: Vec<Vec<Var>> = model
        .weights
        .iter()
        .map(|ws| ws.iter().map(|&v| t.leaf(v)).collect())
        .collect();
    let last = model.layers.len() - 1;
    let mut u: Vec<Option<Vec<Var>>> = vec![None; model.layers.len()];
    let mut spikes = 0u64;
    for frame in frames {
        let mut x: Vec<Var> = frame.iter().map(|&v| t.leaf(v)).collect();
        let mut th_idx = 0;
        for (l, layer) in model.layers.iter().enumerate() {
            x = match layer {
                Layer::Conv { .. } | Layer::Linear { .. } => {
                    let i = weighted(&mut t, layer, &w[l], &x);
                    let prev = u[l].take();
                    if l == last {
                        let next: Vec<Var> = match prev {
                            Some(p) => p.iter().zip(&i).map(|(&a, &b)| t.add(a, b)).collect(),
                            None => i,
                        };
                        u[l] = Some(next.clone());
                        next
                    } else {
                        let th = model.thresholds[th_idx];
                        th_idx += 1;
                        let mut outs = Vec::with_capacity(i.len());
                        let mut next = Vec::with_capacity(i.len());
                        for (n, &inp) in i.iter().enumerate() {
                            let v = match &prev {
                                Some(p) => t.add(p[n], inp),
                                None => inp,
                            };
                            let vv = t.value(v);
                            let fired = vv > th;
                            let sg = model.slope * (1.0 - (vv - th).abs() / th).max(0.0);
                            outs.push(t.custom(v, if fired { 1.0 } else { 0.0 }, sg));
                            if fired {
                                spikes += 1;
                                next.push(t.offset(v, -th));
                            } else {
                                next.push(t.scale(v, model.leak));
                            }
                        }
                        u[l] = Some(next);
                        outs
                    }
                }
                Layer::AvgPool { size, c, h, w: wd } => {
                    let (ho, wo) = (h / size, wd / size);
                    let mut out = Vec::with_capacity(c * ho * wo);
                    for ch in 0..*c {
                        for oy in 0..ho {
                            for ox in 0..wo {
                                let mut cell = Vec::new();
                                for dy in 0..*size {
                                    for dx in 0..*size {
                                        cell.push(x[(ch * h + oy * size + dy) * wd + ox * size + dx]);
                                    }
                                }
                                let s = t.sum(&cell);
                                out.push(t.scale(s, 1.0 / (size * size) as f64));
                            }
                        }
                    }
                    out
                }
                Layer::Mask(m) => x.iter().zip(m).map(|(&a, &k)| t.scale(a, k)).collect(),
            };
        }
    }
    let pots = u[last].clone().expect("at least one step");
    let values: Vec<f64> = pots.iter().map(|&p| t.value(p)).collect();
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<Var> = pots
        .iter()
        .map(|&p| {
            let s = t.offset(p, -m);
            t.exp(s)
        })
        .collect();
    let z = t.sum(&shifted);
    let lse = t.ln(z);
    let lse = t.offset(lse, m);
    let loss = t.sub(lse, pots[label]);
    let g = t.grad(loss);
    Outcome {
        loss: t.value(loss),
        potentials: values,
        grads: w.iter().map(|ws| ws.iter().map(|&v| g[v]).collect()).collect(),
        spikes,
    }
}
