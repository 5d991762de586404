//! Layer descriptions and the dense kernels behind them.
//!
//! Feature maps are stored per sample as flat `(channel, y, x)` buffers. A
//! linear layer reads the same buffer as a flat vector, so no explicit
//! flatten layer exists.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};
use crate::Scalar;

/// Channel-major feature-map shape of a single sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape3 {
    pub const fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub const fn flat(n: usize) -> Self {
        Self { c: n, h: 1, w: 1 }
    }

    pub const fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerKind {
    Conv {
        c_in: usize,
        c_out: usize,
        k_h: usize,
        k_w: usize,
        stride: usize,
        padding: usize,
    },
    Linear {
        n_in: usize,
        n_out: usize,
    },
    #[serde(rename = "avgpool")]
    AvgPool {
        size: usize,
    },
    Dropout {
        rate: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    /// Whether the layer owns LIF membranes. Only conv/linear layers can
    /// spike; the final weighted layer is a plain accumulator.
    pub spiking: bool,
}

impl LayerSpec {
    pub fn conv(c_in: usize, c_out: usize, k: usize, stride: usize, padding: usize) -> Self {
        Self {
            kind: LayerKind::Conv {
                c_in,
                c_out,
                k_h: k,
                k_w: k,
                stride,
                padding,
            },
            spiking: true,
        }
    }

    pub fn linear(n_in: usize, n_out: usize) -> Self {
        Self {
            kind: LayerKind::Linear { n_in, n_out },
            spiking: true,
        }
    }

    pub fn avgpool(size: usize) -> Self {
        Self {
            kind: LayerKind::AvgPool { size },
            spiking: false,
        }
    }

    pub fn dropout(rate: f64) -> Self {
        Self {
            kind: LayerKind::Dropout { rate },
            spiking: false,
        }
    }

    pub fn non_spiking(mut self) -> Self {
        self.spiking = false;
        self
    }

    pub fn is_weighted(&self) -> bool {
        matches!(self.kind, LayerKind::Conv { .. } | LayerKind::Linear { .. })
    }

    pub fn is_conv(&self) -> bool {
        matches!(self.kind, LayerKind::Conv { .. })
    }

    /// Number of weights (no biases anywhere in these networks).
    pub fn param_count(&self) -> usize {
        match self.kind {
            LayerKind::Conv {
                c_in,
                c_out,
                k_h,
                k_w,
                ..
            } => c_in * c_out * k_h * k_w,
            LayerKind::Linear { n_in, n_out } => n_in * n_out,
            _ => 0,
        }
    }

    /// Fan-in of one output unit, used for weight initialization.
    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv { c_in, k_h, k_w, .. } => c_in * k_h * k_w,
            LayerKind::Linear { n_in, .. } => n_in,
            _ => 0,
        }
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: Shape3) -> Result<Shape3> {
        match self.kind {
            LayerKind::Conv {
                c_in,
                c_out,
                k_h,
                k_w,
                stride,
                padding,
            } => {
                if input.c != c_in {
                    return Err(invalid(format!(
                        "conv expects {c_in} input channels, got {}",
                        input.c
                    )));
                }
                if stride == 0 || k_h == 0 || k_w == 0 || c_out == 0 {
                    return Err(invalid("conv kernel, stride and width must be positive"));
                }
                let ph = input.h + 2 * padding;
                let pw = input.w + 2 * padding;
                if ph < k_h || pw < k_w {
                    return Err(invalid("conv kernel larger than padded input"));
                }
                Ok(Shape3::new(c_out, (ph - k_h) / stride + 1, (pw - k_w) / stride + 1))
            }
            LayerKind::Linear { n_in, n_out } => {
                if input.len() != n_in {
                    return Err(invalid(format!(
                        "linear expects {n_in} inputs, got {}",
                        input.len()
                    )));
                }
                if n_out == 0 {
                    return Err(invalid("linear layer with zero outputs"));
                }
                Ok(Shape3::flat(n_out))
            }
            LayerKind::AvgPool { size } => {
                if size == 0 || input.h < size || input.w < size {
                    return Err(invalid("pool window must fit the input"));
                }
                Ok(Shape3::new(input.c, input.h / size, input.w / size))
            }
            LayerKind::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(invalid(format!("dropout rate {rate} outside [0, 1)")));
                }
                Ok(input)
            }
        }
    }
}

/// Fully resolved convolution geometry for one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(spec: &LayerSpec, input: Shape3) -> Result<Self> {
        let out = spec.output_shape(input)?;
        match spec.kind {
            LayerKind::Conv {
                c_in,
                c_out,
                k_h,
                k_w,
                stride,
                padding,
            } => Ok(Self {
                c_in,
                c_out,
                k_h,
                k_w,
                stride,
                padding,
                in_h: input.h,
                in_w: input.w,
                out_h: out.h,
                out_w: out.w,
            }),
            _ => Err(invalid("not a convolution layer")),
        }
    }

    #[inline]
    fn w_index(&self, co: usize, ci: usize, ky: usize, kx: usize) -> usize {
        ((co * self.c_in + ci) * self.k_h + ky) * self.k_w + kx
    }
}

/// Weights reordered to `[c_in][k_h][k_w][c_out]` so the output-channel
/// loop runs over contiguous memory.
fn channel_last_weights<S: Scalar>(g: &ConvGeom, w: &[S]) -> Vec<S> {
    let mut wt = vec![S::zero(); w.len()];
    for co in 0..g.c_out {
        for ci in 0..g.c_in {
            for ky in 0..g.k_h {
                for kx in 0..g.k_w {
                    wt[((ci * g.k_h + ky) * g.k_w + kx) * g.c_out + co] = w[g.w_index(co, ci, ky, kx)];
                }
            }
        }
    }
    wt
}

/// Output position fed by input coordinate `i` through kernel tap `k`.
#[inline]
fn tap(i: usize, k: usize, padding: usize, stride: usize, out_len: usize) -> Option<usize> {
    let d = (i + padding).checked_sub(k)?;
    (d % stride == 0 && d / stride < out_len).then_some(d / stride)
}

/// `out += W * input` for a convolution. `out` must be zeroed by the caller
/// when a fresh result is wanted. Zero inputs are skipped, so spike maps
/// cost in proportion to their activity.
pub fn conv_forward<S: Scalar>(g: &ConvGeom, w: &[S], input: &[S], out: &mut [S]) {
    let wt = channel_last_weights(g, w);
    let out_plane = g.out_h * g.out_w;
    let co_n = g.c_out;
    let mut acc = vec![S::zero(); out_plane * co_n];
    for ci in 0..g.c_in {
        for iy in 0..g.in_h {
            for ix in 0..g.in_w {
                let v = input[(ci * g.in_h + iy) * g.in_w + ix];
                if v == S::zero() {
                    continue;
                }
                for ky in 0..g.k_h {
                    let Some(oy) = tap(iy, ky, g.padding, g.stride, g.out_h) else { continue };
                    for kx in 0..g.k_w {
                        let Some(ox) = tap(ix, kx, g.padding, g.stride, g.out_w) else { continue };
                        let wrow = &wt[((ci * g.k_h + ky) * g.k_w + kx) * co_n..][..co_n];
                        let arow = &mut acc[(oy * g.out_w + ox) * co_n..][..co_n];
                        for (a, &wv) in arow.iter_mut().zip(wrow) {
                            *a += wv * v;
                        }
                    }
                }
            }
        }
    }
    for pos in 0..out_plane {
        for co in 0..co_n {
            out[co * out_plane + pos] += acc[pos * co_n + co];
        }
    }
}

/// Accumulates `grad_w += dL/dW` and, when requested, `grad_in += dL/dInput`
/// for a convolution given the output gradient.
pub fn conv_backward<S: Scalar>(
    g: &ConvGeom,
    w: &[S],
    input: &[S],
    grad_out: &[S],
    grad_w: &mut [S],
    mut grad_in: Option<&mut [S]>,
) {
    let out_plane = g.out_h * g.out_w;
    let co_n = g.c_out;
    if grad_out.iter().all(|&v| v == S::zero()) {
        return;
    }
    let mut go = vec![S::zero(); out_plane * co_n];
    for co in 0..co_n {
        for pos in 0..out_plane {
            go[pos * co_n + co] = grad_out[co * out_plane + pos];
        }
    }
    let wt = grad_in.is_some().then(|| channel_last_weights(g, w));
    let mut gwt = vec![S::zero(); w.len()];
    for ci in 0..g.c_in {
        for iy in 0..g.in_h {
            for ix in 0..g.in_w {
                let idx = (ci * g.in_h + iy) * g.in_w + ix;
                let v = input[idx];
                let mut gi = S::zero();
                for ky in 0..g.k_h {
                    let Some(oy) = tap(iy, ky, g.padding, g.stride, g.out_h) else { continue };
                    for kx in 0..g.k_w {
                        let Some(ox) = tap(ix, kx, g.padding, g.stride, g.out_w) else { continue };
                        let tap_row = ((ci * g.k_h + ky) * g.k_w + kx) * co_n;
                        let grow = &go[(oy * g.out_w + ox) * co_n..][..co_n];
                        if v != S::zero() {
                            for (a, &gv) in gwt[tap_row..tap_row + co_n].iter_mut().zip(grow) {
                                *a += gv * v;
                            }
                        }
                        if let Some(wt) = &wt {
                            for (&wv, &gv) in wt[tap_row..tap_row + co_n].iter().zip(grow) {
                                gi += wv * gv;
                            }
                        }
                    }
                }
                if let Some(out) = grad_in.as_deref_mut() {
                    out[idx] += gi;
                }
            }
        }
    }
    for co in 0..co_n {
        for ci in 0..g.c_in {
            for ky in 0..g.k_h {
                for kx in 0..g.k_w {
                    grad_w[g.w_index(co, ci, ky, kx)] += gwt[((ci * g.k_h + ky) * g.k_w + kx) * co_n + co];
                }
            }
        }
    }
}

/// `out += W x` with `W` stored row-major as `[n_out][n_in]`.
pub fn linear_forward<S: Scalar>(n_in: usize, w: &[S], input: &[S], out: &mut [S]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(n_in)) {
        let mut acc = S::zero();
        for (&wv, &xv) in row.iter().zip(input) {
            acc += wv * xv;
        }
        *o += acc;
    }
}

pub fn linear_backward<S: Scalar>(
    n_in: usize,
    w: &[S],
    input: &[S],
    grad_out: &[S],
    grad_w: &mut [S],
    mut grad_in: Option<&mut [S]>,
) {
    for (o, &go) in grad_out.iter().enumerate() {
        if go == S::zero() {
            continue;
        }
        let row = &w[o * n_in..(o + 1) * n_in];
        let grow = &mut grad_w[o * n_in..(o + 1) * n_in];
        for (gw, &xv) in grow.iter_mut().zip(input) {
            *gw += go * xv;
        }
        if let Some(gi) = grad_in.as_deref_mut() {
            for (g, &wv) in gi.iter_mut().zip(row) {
                *g += go * wv;
            }
        }
    }
}

/// Non-overlapping window mean with window = stride = `size`.
pub fn avgpool_forward<S: Scalar>(size: usize, input: Shape3, x: &[S], out: &mut [S]) {
    let oh = input.h / size;
    let ow = input.w / size;
    let scale = S::one() / S::of((size * size) as f64);
    for c in 0..input.c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = S::zero();
                for dy in 0..size {
                    let row = (c * input.h + oy * size + dy) * input.w + ox * size;
                    for &v in &x[row..row + size] {
                        acc += v;
                    }
                }
                out[(c * oh + oy) * ow + ox] = acc * scale;
            }
        }
    }
}

pub fn avgpool_backward<S: Scalar>(size: usize, input: Shape3, grad_out: &[S], grad_in: &mut [S]) {
    let oh = input.h / size;
    let ow = input.w / size;
    let scale = S::one() / S::of((size * size) as f64);
    for c in 0..input.c {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = grad_out[(c * oh + oy) * ow + ox] * scale;
                for dy in 0..size {
                    let row = (c * input.h + oy * size + dy) * input.w + ox * size;
                    for v in &mut grad_in[row..row + size] {
                        *v += g;
                    }
                }
            }
        }
    }
}

/// Computes one layer's contribution for a single timestep: the weighted
/// input for conv/linear layers, the window mean for pooling, and the
/// masked input for dropout (`mask == None` means inference).
pub fn layer_apply<S: Scalar>(
    spec: &LayerSpec,
    input_shape: Shape3,
    weights: &[S],
    input: &[S],
    mask: Option<&[S]>,
) -> Result<Vec<S>> {
    check_len("layer input", input_shape.len(), input.len())?;
    let out_shape = spec.output_shape(input_shape)?;
    check_len("layer weights", spec.param_count(), weights.len())?;
    let mut out = vec![S::zero(); out_shape.len()];
    match spec.kind {
        LayerKind::Conv { .. } => {
            let g = ConvGeom::new(spec, input_shape)?;
            conv_forward(&g, weights, input, &mut out);
        }
        LayerKind::Linear { n_in, .. } => linear_forward(n_in, weights, input, &mut out),
        LayerKind::AvgPool { size } => avgpool_forward(size, input_shape, input, &mut out),
        LayerKind::Dropout { .. } => match mask {
            Some(m) => {
                check_len("dropout mask", input.len(), m.len())?;
                for ((o, &x), &k) in out.iter_mut().zip(input).zip(m) {
                    *o = x * k;
                }
            }
            None => out.copy_from_slice(input),
        },
    }
    Ok(out)
}
