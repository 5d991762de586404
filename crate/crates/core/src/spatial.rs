//! PCA-driven structured pruning.
//!
//! Each conv layer's time-averaged accumulated potential is laid out as a
//! matrix with one row per (sample, spatial position) and one column per
//! filter. The number of principal components needed to explain a variance
//! fraction becomes the layer's new width; layers whose width would shrink
//! relative to the preceding retained layer are dropped, and the classifier
//! head collapses to a single linear layer.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Result, SnnError};
use crate::snn::forward::{conv_geoms, run_sample, RunOptions};
use crate::snn::{LayerKind, LayerSpec, Network, NetworkConfig, PoissonEncoder};
use crate::Scalar;

pub const VARIANCE_THRESHOLD: f64 = 0.999;

/// Relative size below which an eigenvalue counts as zero.
const EIGEN_FLOOR: f64 = 1e-12;
const EIGEN_RESIDUAL_TOL: f64 = 1e-10;

/// Row-major `rows x cols` activation matrix of one conv layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMatrix {
    pub layer: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ActivationMatrix {
    pub fn new(layer: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(SnnError::ShapeMismatch {
                context: "activation matrix",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self {
            layer,
            rows,
            cols,
            data,
        })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.data[r * self.cols + c]).collect()
    }
}

/// Runs `data` through `net` for `timesteps` steps and returns one
/// activation matrix per spiking conv layer, in depth order. All layers are
/// filled from the same forward passes.
pub fn collect_activations<S: Scalar>(
    net: &Network<S>,
    data: &Dataset<S>,
    timesteps: usize,
    encoder: &PoissonEncoder,
) -> Result<Vec<ActivationMatrix>> {
    if timesteps == 0 {
        return Err(invalid("timestep count must be positive"));
    }
    if data.is_empty() {
        return Err(invalid("no samples to collect activations from"));
    }
    let lif = net.lif_configs()?;
    let geoms = conv_geoms(net);
    let shape = net.input_shape();
    let convs: Vec<usize> = net
        .layers()
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_conv() && l.spiking)
        .map(|(i, _)| i)
        .collect();
    let opts = RunOptions::default();
    let records = data
        .samples
        .par_iter()
        .map(|s| {
            let spikes = encoder.encode(&s.image, shape, timesteps, s.id)?;
            Ok(run_sample(net, &lif, &geoms, &spikes, 0, &opts, &mut |_| {}).0.record)
        })
        .collect::<Result<Vec<_>>>()?;
    let inv_t = 1.0 / timesteps as f64;
    Ok(convs
        .into_iter()
        .map(|l| {
            let out = net.shapes()[l + 1];
            let (m, hw) = (out.c, out.h * out.w);
            let mut mat = Vec::with_capacity(records.len() * hw * m);
            for rec in &records {
                let accum = &rec.layers[l].as_ref().expect("conv activity").accum;
                for pos in 0..hw {
                    mat.extend((0..m).map(|f| accum[f * hw + pos].as_f64() * inv_t));
                }
            }
            ActivationMatrix {
                layer: l,
                rows: records.len() * hw,
                cols: m,
                data: mat,
            }
        })
        .collect())
}

/// Eigenvalues of the (optionally column-centered) Gram matrix `C^T C`,
/// sorted in decreasing order, with values below `1e-12 * trace` set to zero.
pub fn gram_spectrum(m: &ActivationMatrix, center: bool) -> Result<Vec<f64>> {
    if m.cols == 0 {
        return Err(invalid("activation matrix has no columns"));
    }
    if m.rows < m.cols {
        return Err(invalid(format!(
            "layer {}: {} rows cannot support {} columns; collect more samples",
            m.layer, m.rows, m.cols
        )));
    }
    if m.data.iter().any(|v| !v.is_finite()) {
        return Err(SnnError::Degenerate(format!("layer {}: non-finite activations", m.layer)));
    }
    let mut c = DMatrix::from_row_slice(m.rows, m.cols, &m.data);
    if center {
        for mut col in c.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
    }
    let gram = c.tr_mul(&c);
    let trace = gram.trace();
    if !(trace > 0.0) {
        return Err(SnnError::Degenerate(format!(
            "layer {}: activations have no variance",
            m.layer
        )));
    }
    let eig = SymmetricEigen::new(gram.clone());
    let residual = (&gram * &eig.eigenvectors
        - &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues))
        .norm();
    if residual > EIGEN_RESIDUAL_TOL * gram.norm().max(1.0) {
        warn!("layer {}: eigen-decomposition residual {residual:e}", m.layer);
    }
    let floor = EIGEN_FLOOR * trace;
    let mut vals: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&v| if v < floor { 0.0 } else { v })
        .collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    Ok(vals)
}

/// Smallest `k` such that the top-`k` eigenvalues of `C^T C` carry at least
/// `threshold` of the total.
pub fn significant_dims(m: &ActivationMatrix, threshold: f64, center: bool) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(invalid(format!("variance threshold {threshold} outside (0, 1]")));
    }
    let vals = gram_spectrum(m, center)?;
    Ok(dims_for_threshold(&vals, threshold))
}

/// Smallest `k` whose leading eigenvalues reach `threshold` of the total.
/// `vals` must be sorted in decreasing order.
pub fn dims_for_threshold(vals: &[f64], threshold: f64) -> usize {
    let total: f64 = vals.iter().sum();
    let target = threshold * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    for (k, v) in vals.iter().enumerate() {
        cum += v;
        if cum >= target {
            return k + 1;
        }
    }
    vals.len().max(1)
}

/// Positions (into `dims`) of the layers that survive depth reduction: a
/// layer is dropped when its dimension is strictly below that of the
/// preceding retained layer. The first layer always stays.
pub fn depth_reduce(dims: &[usize]) -> Result<Vec<usize>> {
    let (&first, rest) = dims
        .split_first()
        .ok_or_else(|| invalid("no layer dimensions to reduce"))?;
    let mut kept = vec![0];
    let mut prev = first;
    for (i, &d) in rest.iter().enumerate() {
        if d >= prev {
            kept.push(i + 1);
            prev = d;
        }
    }
    Ok(kept)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrunedLayer {
    /// Index in the parent's layer list.
    pub layer: usize,
    pub initial: usize,
    pub significant: usize,
    /// `None` when the layer was removed.
    pub final_dim: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcCollapse {
    /// Parent linear layers replaced by the single classifier.
    pub replaced: Vec<usize>,
    pub n_in: usize,
    pub n_out: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub variance_threshold: f64,
    pub centered: bool,
    pub layers: Vec<PrunedLayer>,
    /// Parent indices of removed conv layers.
    pub removed: Vec<usize>,
    pub parent_params: usize,
    pub pruned_params: usize,
    pub param_ratio: f64,
    pub fc_collapse: FcCollapse,
}

/// Rebuilds `parent` with conv widths taken from `dims` (one per spiking
/// conv layer in depth order), keeping only the conv layers listed in
/// `retained` and replacing every linear layer by one non-spiking linear
/// classifier. Weights are not carried over.
pub fn build_pruned_config(
    parent: &NetworkConfig,
    dims: &[usize],
    retained: &[usize],
) -> Result<(NetworkConfig, FcCollapse)> {
    let convs: Vec<usize> = parent
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_conv() && l.spiking)
        .map(|(i, _)| i)
        .collect();
    if dims.len() != convs.len() {
        return Err(SnnError::ShapeMismatch {
            context: "pruned conv dimensions",
            expected: convs.len(),
            actual: dims.len(),
        });
    }
    if let Some(&r) = retained.iter().find(|&&r| r >= dims.len()) {
        return Err(invalid(format!("retained position {r} out of range")));
    }
    if retained.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("retained positions must be strictly increasing"));
    }
    let first_linear = parent
        .layers
        .iter()
        .position(|l| matches!(l.kind, LayerKind::Linear { .. }))
        .ok_or_else(|| invalid("parent has no linear classifier to collapse"))?;
    if convs.iter().any(|&c| c > first_linear) {
        return Err(invalid("conv layers after the first linear layer are unsupported"));
    }

    let mut layers = Vec::new();
    let mut channels = parent.input.c;
    for (i, spec) in parent.layers[..first_linear].iter().enumerate() {
        match &spec.kind {
            LayerKind::Conv {
                k_h,
                k_w,
                stride,
                padding,
                ..
            } if spec.spiking => {
                let pos = convs.iter().position(|&c| c == i).expect("conv index");
                if !retained.contains(&pos) {
                    continue;
                }
                let width = dims[pos];
                if width == 0 {
                    return Err(invalid(format!("layer {i} pruned to zero width")));
                }
                layers.push(LayerSpec {
                    kind: LayerKind::Conv {
                        c_in: channels,
                        c_out: width,
                        k_h: *k_h,
                        k_w: *k_w,
                        stride: *stride,
                        padding: *padding,
                    },
                    spiking: true,
                });
                channels = width;
            }
            _ => layers.push(spec.clone()),
        }
    }
    // flattened feature volume entering the classifier
    let probe = NetworkConfig {
        input: parent.input,
        layers: layers.clone(),
    };
    let mut shape = parent.input;
    for l in &probe.layers {
        shape = l.output_shape(shape)?;
    }
    let n_out = parent.num_classes();
    layers.push(LayerSpec::linear(shape.len(), n_out).non_spiking());
    let replaced = parent
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l.kind, LayerKind::Linear { .. }))
        .map(|(i, _)| i)
        .collect();
    let cfg = NetworkConfig::new(parent.input, layers)?;
    Ok((
        cfg,
        FcCollapse {
            replaced,
            n_in: shape.len(),
            n_out,
        },
    ))
}

/// Settings of one PCA pruning pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialConfig {
    pub variance_threshold: f64,
    /// Mean-center columns before the decomposition.
    pub center: bool,
    /// Number of samples used for collection.
    pub samples: usize,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        Self {
            variance_threshold: VARIANCE_THRESHOLD,
            center: true,
            samples: 256,
        }
    }
}

/// Full spatial pruning pass: collect, measure, reduce depth, rebuild.
pub fn prune_spatial<S: Scalar>(
    net: &Network<S>,
    data: &Dataset<S>,
    timesteps: usize,
    encoder: &PoissonEncoder,
    cfg: &SpatialConfig,
) -> Result<(NetworkConfig, PruneReport)> {
    if cfg.samples == 0 {
        return Err(invalid("spatial pruning needs at least one sample"));
    }
    let mats = collect_activations(net, &data.take(cfg.samples), timesteps, encoder)?;
    let dims = mats
        .par_iter()
        .map(|m| significant_dims(m, cfg.variance_threshold, cfg.center))
        .collect::<Result<Vec<_>>>()?;
    let retained = depth_reduce(&dims)?;
    let (pruned, fc_collapse) = build_pruned_config(net.config(), &dims, &retained)?;
    let layers: Vec<PrunedLayer> = mats
        .iter()
        .zip(&dims)
        .enumerate()
        .map(|(pos, (m, &d))| PrunedLayer {
            layer: m.layer,
            initial: m.cols,
            significant: d,
            final_dim: retained.contains(&pos).then_some(d),
        })
        .collect();
    let removed = layers
        .iter()
        .filter(|l| l.final_dim.is_none())
        .map(|l| l.layer)
        .collect();
    let parent_params = net.param_count();
    let pruned_params = pruned.param_count();
    let report = PruneReport {
        variance_threshold: cfg.variance_threshold,
        centered: cfg.center,
        layers,
        removed,
        parent_params,
        pruned_params,
        param_ratio: pruned_params as f64 / parent_params as f64,
        fc_collapse,
    };
    Ok((pruned, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::Shape3;

    #[test]
    fn depth_reduce_reference_rows() {
        assert_eq!(
            depth_reduce(&[34, 118, 123, 250, 244, 496, 503]).unwrap(),
            vec![0, 1, 2, 3, 5, 6]
        );
        assert_eq!(
            depth_reduce(&[48, 114, 241, 497, 496, 484, 497, 500]).unwrap(),
            vec![0, 1, 2, 3, 6, 7]
        );
        assert_eq!(depth_reduce(&[1, 2, 3]).unwrap(), vec![0, 1, 2]);
        assert!(depth_reduce(&[]).is_err());
    }

    #[test]
    fn consecutive_decreases_compare_with_retained_layer() {
        // 5 < 8 dropped; 7 < 8 dropped even though 7 > 5
        assert_eq!(depth_reduce(&[8, 5, 7, 9]).unwrap(), vec![0, 3]);
    }

    #[test]
    fn duplicated_columns_have_one_dimension() {
        let data: Vec<f64> = (0..20).flat_map(|i| [i as f64, i as f64]).collect();
        let m = ActivationMatrix::new(0, 20, 2, data).unwrap();
        assert_eq!(significant_dims(&m, 0.999, true).unwrap(), 1);
        assert_eq!(significant_dims(&m, 0.999, false).unwrap(), 1);
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        let m = ActivationMatrix::new(0, 4, 2, vec![0.0; 8]).unwrap();
        assert!(matches!(significant_dims(&m, 0.999, true), Err(SnnError::Degenerate(_))));
    }

    #[test]
    fn too_few_rows_rejected() {
        let m = ActivationMatrix::new(0, 2, 3, vec![1.0; 6]).unwrap();
        assert!(significant_dims(&m, 0.999, true).is_err());
    }

    fn parent() -> NetworkConfig {
        NetworkConfig::new(
            Shape3::new(1, 8, 8),
            vec![
                LayerSpec::conv(1, 16, 3, 1, 1),
                LayerSpec::avgpool(2),
                LayerSpec::conv(16, 32, 3, 1, 1),
                LayerSpec::conv(32, 32, 3, 1, 1),
                LayerSpec::avgpool(2),
                LayerSpec::dropout(0.1),
                LayerSpec::linear(128, 64),
                LayerSpec::dropout(0.1),
                LayerSpec::linear(64, 4).non_spiking(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn rebuild_rewires_and_collapses_head() {
        let (cfg, fc) = build_pruned_config(&parent(), &[6, 12, 10], &[0, 1]).unwrap();
        let kinds: Vec<_> = cfg.layers.iter().map(|l| l.kind.clone()).collect();
        assert_eq!(cfg.layers.len(), 6);
        assert!(matches!(kinds[0], LayerKind::Conv { c_in: 1, c_out: 6, .. }));
        assert!(matches!(kinds[2], LayerKind::Conv { c_in: 6, c_out: 12, .. }));
        assert!(matches!(kinds[5], LayerKind::Linear { n_in: 48, n_out: 4 }));
        assert_eq!(fc, FcCollapse { replaced: vec![6, 8], n_in: 48, n_out: 4 });
        assert!(cfg.param_count() < parent().param_count());
    }

    #[test]
    fn unchanged_dims_only_collapse_head() {
        let (cfg, _) = build_pruned_config(&parent(), &[16, 32, 32], &[0, 1, 2]).unwrap();
        assert_eq!(&cfg.layers[..6], &parent().layers[..6]);
        assert_eq!(cfg.layers.len(), 7);
    }

    #[test]
    fn zero_width_rejected() {
        assert!(build_pruned_config(&parent(), &[0, 12, 10], &[0, 1, 2]).is_err());
    }
}
