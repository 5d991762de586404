//! Post-training weight sharing: each weighted layer is clustered with 1-D
//! K-means and every weight is replaced by its cluster centroid.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SnnError};
use crate::snn::Network;
use crate::Scalar;

/// Bit width of an unquantized weight.
pub const FULL_PRECISION_BITS: u32 = 32;

const MAX_ITERS: usize = 300;
const MOVE_TOL: f64 = 1e-8;

/// Seeded k-means++ starts tried in addition to the evenly spaced and
/// quantile starts.
pub const DEFAULT_RESTARTS: usize = 32;

/// Result of clustering one weight array.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    /// Sorted ascending.
    pub centroids: Vec<f64>,
    pub assignments: Vec<u32>,
    /// Within-cluster sum of squares after each Lloyd iteration of the
    /// winning start (one entry when the data has no more distinct values
    /// than clusters).
    pub wcss_trace: Vec<f64>,
    /// Fewer distinct values than requested clusters.
    pub shrunk: bool,
}

impl KMeans {
    pub fn wcss(&self, x: &[f64]) -> f64 {
        wcss(x, &self.centroids, &self.assignments)
    }
}

fn wcss(x: &[f64], c: &[f64], a: &[u32]) -> f64 {
    x.iter().zip(a).map(|(&v, &k)| (v - c[k as usize]).powi(2)).sum()
}

/// Index of the nearest centroid in a sorted list; a point exactly halfway
/// goes to the lower index.
fn nearest(c: &[f64], v: f64) -> u32 {
    let i = c.partition_point(|&m| m < v);
    if i == 0 {
        return 0;
    }
    if i == c.len() {
        return (c.len() - 1) as u32;
    }
    if v - c[i - 1] <= c[i] - v {
        (i - 1) as u32
    } else {
        i as u32
    }
}

/// Sorted data with prefix sums; clusters of sorted 1-D data are contiguous
/// runs, so one Lloyd iteration costs `O(z log n)` plus the WCSS pass.
struct Sorted {
    x: Vec<f64>,
    prefix: Vec<f64>,
}

impl Sorted {
    fn new(weights: &[f64]) -> Self {
        let mut x = weights.to_vec();
        x.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(x.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &v in &x {
            acc += v;
            prefix.push(acc);
        }
        Self { x, prefix }
    }

    /// End of each cluster's run for sorted centroids `c`.
    fn bounds(&self, c: &[f64]) -> Vec<usize> {
        let mut b: Vec<usize> = c
            .windows(2)
            .map(|w| self.x.partition_point(|&v| v - w[0] <= w[1] - v))
            .collect();
        b.push(self.x.len());
        for i in 1..b.len() {
            b[i] = b[i].max(b[i - 1]);
        }
        b
    }

    fn wcss(&self, c: &[f64], bounds: &[usize]) -> f64 {
        let mut start = 0;
        let mut total = 0.0;
        for (k, &end) in bounds.iter().enumerate() {
            total += self.x[start..end].iter().map(|&v| (v - c[k]).powi(2)).sum::<f64>();
            start = end;
        }
        total
    }

    /// Lloyd iterations from `c` until no centroid moves by `MOVE_TOL` or
    /// `MAX_ITERS` is reached. Returns the centroids and the WCSS trace.
    fn lloyd(&self, mut c: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
        let mut trace = Vec::new();
        for _ in 0..MAX_ITERS {
            let bounds = self.bounds(&c);
            let mut start = 0;
            let mut moved = 0.0f64;
            for (k, &end) in bounds.iter().enumerate() {
                if end > start {
                    let m = (self.prefix[end] - self.prefix[start]) / (end - start) as f64;
                    moved = moved.max((m - c[k]).abs());
                    c[k] = m;
                }
                start = end;
            }
            trace.push(self.wcss(&c, &bounds));
            c.sort_by(f64::total_cmp);
            if moved < MOVE_TOL {
                break;
            }
        }
        (c, trace)
    }

    /// Moves single points across cluster boundaries while any move lowers
    /// the within-cluster sum of squares, then re-runs Lloyd. Alternates
    /// until neither step changes the clustering.
    fn refine(&self, c: Vec<f64>, mut trace: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
        let mut c = c;
        for _ in 0..MAX_ITERS {
            let mut bounds = self.bounds(&c);
            let mut moved = false;
            loop {
                let mut any = false;
                for k in 0..bounds.len() - 1 {
                    let start = if k == 0 { 0 } else { bounds[k - 1] };
                    let (end, next_end) = (bounds[k], bounds[k + 1]);
                    let n_a = (end - start) as f64;
                    let n_b = (next_end - end) as f64;
                    let mean = |s: usize, e: usize| (self.prefix[e] - self.prefix[s]) / (e - s) as f64;
                    // last point of cluster k into cluster k+1
                    if n_a > 1.0 {
                        let x = self.x[end - 1];
                        let gain_b = if n_b > 0.0 { n_b / (n_b + 1.0) * (x - mean(end, next_end)).powi(2) } else { 0.0 };
                        let loss_a = n_a / (n_a - 1.0) * (x - mean(start, end)).powi(2);
                        if gain_b < loss_a * (1.0 - 1e-12) {
                            bounds[k] -= 1;
                            any = true;
                            continue;
                        }
                    }
                    // first point of cluster k+1 into cluster k
                    if n_b > 1.0 {
                        let x = self.x[end];
                        let gain_a = if n_a > 0.0 { n_a / (n_a + 1.0) * (x - mean(start, end)).powi(2) } else { 0.0 };
                        let loss_b = n_b / (n_b - 1.0) * (x - mean(end, next_end)).powi(2);
                        if gain_a < loss_b * (1.0 - 1e-12) {
                            bounds[k] += 1;
                            any = true;
                        }
                    }
                }
                if !any {
                    break;
                }
                moved = true;
            }
            if !moved {
                break;
            }
            let mut start = 0;
            for (k, &end) in bounds.iter().enumerate() {
                if end > start {
                    c[k] = (self.prefix[end] - self.prefix[start]) / (end - start) as f64;
                }
                start = end;
            }
            trace.push(self.wcss(&c, &bounds));
            c.sort_by(f64::total_cmp);
            let (c2, t2) = self.lloyd(c);
            c = c2;
            trace.extend(t2);
        }
        (c, trace)
    }
}

fn linear_start(lo: f64, hi: f64, z: usize) -> Vec<f64> {
    if z == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..z).map(|i| lo + (hi - lo) * i as f64 / (z - 1) as f64).collect()
}

fn quantile_start(x: &[f64], z: usize) -> Vec<f64> {
    (0..z)
        .map(|i| x[((2 * i + 1) * x.len() / (2 * z)).min(x.len() - 1)])
        .collect()
}

/// k-means++ seeding over the sorted data.
fn plus_plus_start(x: &[f64], z: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut c = vec![x[rng.random_range(0..x.len())]];
    let mut d2: Vec<f64> = x.iter().map(|&v| (v - c[0]).powi(2)).collect();
    while c.len() < z {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            d2.iter()
                .position(|&d| {
                    r -= d;
                    r < 0.0
                })
                .unwrap_or(x.len() - 1)
        } else {
            rng.random_range(0..x.len())
        };
        let next = x[pick];
        c.push(next);
        for (d, &v) in d2.iter_mut().zip(x) {
            *d = d.min((v - next).powi(2));
        }
    }
    c.sort_by(f64::total_cmp);
    c
}

/// 1-D K-means by Lloyd's algorithm. Lloyd runs from an evenly spaced start
/// over `[min, max]`, a quantile start and `restarts` k-means++ starts drawn
/// from `seed`; the run with the lowest within-cluster sum of squares wins
/// (earlier starts win ties). Each run stops when no centroid moves by
/// `1e-8` or more, or after 300 iterations. Data with at most `z` distinct
/// values is represented exactly.
pub fn kmeans_cluster(weights: &[f64], z: usize, restarts: usize, seed: u64) -> Result<KMeans> {
    if z == 0 {
        return Err(invalid("cluster count must be positive"));
    }
    if weights.is_empty() {
        return Err(invalid("cannot cluster an empty weight array"));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(SnnError::Degenerate("non-finite weight".into()));
    }
    let data = Sorted::new(weights);
    let mut distinct = data.x.clone();
    distinct.dedup();
    if distinct.len() <= z {
        let assignments: Vec<u32> = weights.iter().map(|&w| nearest(&distinct, w)).collect();
        let shrunk = distinct.len() < z;
        return Ok(KMeans {
            wcss_trace: vec![wcss(weights, &distinct, &assignments)],
            centroids: distinct,
            assignments,
            shrunk,
        });
    }

    let (lo, hi) = (data.x[0], data.x[data.x.len() - 1]);
    let mut starts = vec![linear_start(lo, hi, z), quantile_start(&data.x, z)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    starts.extend((0..restarts).map(|_| plus_plus_start(&data.x, z, &mut rng)));
    let (c, trace) = starts
        .into_iter()
        .map(|s| {
            let (c, t) = data.lloyd(s);
            data.refine(c, t)
        })
        .fold(None::<(Vec<f64>, Vec<f64>)>, |best, run| match best {
            Some(b) if b.1.last() <= run.1.last() => Some(b),
            _ => Some(run),
        })
        .expect("at least one start");
    let assignments = weights.iter().map(|&w| nearest(&c, w)).collect();
    Ok(KMeans {
        centroids: c,
        assignments,
        wcss_trace: trace,
        shrunk: false,
    })
}

/// Cluster count for a bit width, saturating at `u64::MAX`.
pub fn clusters_for_bits(bits: u32) -> Result<u64> {
    if !(1..=FULL_PRECISION_BITS).contains(&bits) {
        return Err(invalid(format!("bit width {bits} outside [1, 32]")));
    }
    Ok(1u64.checked_shl(bits).unwrap_or(u64::MAX))
}

/// Compression rate of sharing `z` values among `p` weights of `b` bits:
/// `p*b / (p*log2(z) + z*b)`.
pub fn compression_rate(p: u64, b: u32, z: u64) -> Result<f64> {
    if z == 0 {
        return Err(invalid("cluster count must be positive"));
    }
    if p == 0 || b == 0 {
        return Err(invalid("connection count and bit width must be positive"));
    }
    let (p, b, z) = (p as f64, b as f64, z as f64);
    Ok(p * b / (p * z.log2() + z * b))
}

/// Shared-weight table of one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook<S> {
    pub layer: usize,
    /// Requested bit width; the nominal cluster count is `2^bits`.
    pub bits: u32,
    pub centroids: Vec<S>,
    pub assignments: Vec<u32>,
}

impl<S: Scalar> Codebook<S> {
    pub fn new(layer: usize, bits: u32, centroids: Vec<S>, assignments: Vec<u32>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(invalid("codebook needs at least one centroid"));
        }
        if centroids.iter().any(|c| !c.is_finite()) {
            return Err(invalid("codebook centroids must be finite"));
        }
        if let Some(&a) = assignments.iter().find(|&&a| a as usize >= centroids.len()) {
            return Err(invalid(format!(
                "assignment {a} outside codebook of {}",
                centroids.len()
            )));
        }
        Ok(Self {
            layer,
            bits,
            centroids,
            assignments,
        })
    }

    pub fn weights(&self) -> Vec<S> {
        self.assignments
            .iter()
            .map(|&a| self.centroids[a as usize])
            .collect()
    }

    /// Bits needed per stored index (at least one).
    pub fn index_bits(&self) -> u32 {
        let n = self.centroids.len() as u64;
        (u64::BITS - (n - 1).leading_zeros()).max(1)
    }

    pub fn packed_indices(&self) -> Vec<u8> {
        pack_indices(&self.assignments, self.index_bits())
    }
}

/// Packs `values` LSB-first at `bits` bits each into `ceil(len*bits/8)` bytes.
pub fn pack_indices(values: &[u32], bits: u32) -> Vec<u8> {
    let bits = bits as usize;
    let mut out = vec![0u8; (values.len() * bits).div_ceil(8)];
    for (i, &v) in values.iter().enumerate() {
        let base = i * bits;
        for b in 0..bits {
            if (v >> b) & 1 == 1 {
                let pos = base + b;
                out[pos / 8] |= 1 << (pos % 8);
            }
        }
    }
    out
}

/// Inverse of [`pack_indices`].
pub fn unpack_indices(bytes: &[u8], bits: u32, count: usize) -> Result<Vec<u32>> {
    if !(1..=32).contains(&bits) {
        return Err(invalid(format!("index width {bits} outside [1, 32]")));
    }
    let bits = bits as usize;
    let need = (count * bits).div_ceil(8);
    if bytes.len() < need {
        return Err(SnnError::ShapeMismatch {
            context: "packed index block",
            expected: need,
            actual: bytes.len(),
        });
    }
    Ok((0..count)
        .map(|i| {
            let base = i * bits;
            (0..bits).fold(0u32, |acc, b| {
                let pos = base + b;
                acc | ((((bytes[pos / 8] >> (pos % 8)) & 1) as u32) << b)
            })
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionStats {
    pub layer: usize,
    /// Connection count.
    pub p: u64,
    /// Original bit width.
    pub b: u32,
    /// Nominal cluster count `2^bits`.
    pub z: u64,
    /// Centroids actually used (at most `z`).
    pub clusters: usize,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub bits: u32,
    pub layers: Vec<CompressionStats>,
    /// `sum(p*b) / sum(p*log2(z) + z*b)` over all layers.
    pub overall_r: f64,
}

/// Clusters every conv and linear layer independently at `bits` bits and
/// returns the network with centroid weights, the codebooks and the rates.
pub fn quantize_network<S: Scalar>(
    net: &Network<S>,
    bits: u32,
    seed: u64,
) -> Result<(Network<S>, Vec<Codebook<S>>, CompressionReport)> {
    let z = clusters_for_bits(bits)?;
    let layers: Vec<usize> = net.config().weighted_layers();
    let books = layers
        .par_iter()
        .map(|&l| {
            let w: Vec<f64> = net.weights[l].iter().map(|v| v.as_f64()).collect();
            let km = kmeans_cluster(&w, z.min(usize::MAX as u64) as usize, DEFAULT_RESTARTS, seed ^ l as u64)?;
            if km.shrunk && bits < FULL_PRECISION_BITS {
                warn!(
                    "layer {l}: only {} distinct weights for {z} clusters",
                    km.centroids.len()
                );
            }
            let centroids: Vec<S> = km.centroids.iter().map(|&c| S::of(c)).collect();
            Codebook::new(l, bits, centroids, km.assignments)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = net.clone();
    let mut stats = Vec::with_capacity(books.len());
    let (mut num, mut den) = (0.0, 0.0);
    for cb in &books {
        out.weights[cb.layer] = cb.weights();
        let p = cb.assignments.len() as u64;
        let b = FULL_PRECISION_BITS;
        num += p as f64 * b as f64;
        den += p as f64 * bits as f64 + z as f64 * b as f64;
        stats.push(CompressionStats {
            layer: cb.layer,
            p,
            b,
            z,
            clusters: cb.centroids.len(),
            r: compression_rate(p, b, z)?,
        });
    }
    let report = CompressionReport {
        bits,
        layers: stats,
        overall_r: num / den,
    };
    Ok((out, books, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_clusters_are_exact() {
        let km = kmeans_cluster(&[1.0, 1.0, 5.0, 5.0], 2, DEFAULT_RESTARTS, 0).unwrap();
        assert_eq!(km.centroids, vec![1.0, 5.0]);
        assert_eq!(km.wcss(&[1.0, 1.0, 5.0, 5.0]), 0.0);
    }

    #[test]
    fn constant_weights_single_cluster() {
        let km = kmeans_cluster(&[0.3; 7], 1, DEFAULT_RESTARTS, 0).unwrap();
        assert_eq!(km.centroids, vec![0.3]);
        assert_eq!(km.assignments, vec![0; 7]);
    }

    #[test]
    fn too_few_distinct_values_shrink() {
        let km = kmeans_cluster(&[2.0, 2.0, 3.0], 8, DEFAULT_RESTARTS, 0).unwrap();
        assert!(km.shrunk);
        assert_eq!(km.centroids, vec![2.0, 3.0]);
    }

    #[test]
    fn lloyd_converges_on_three_groups() {
        let x = [0.0, 0.1, 0.2, 5.0, 5.1, 9.9, 10.0];
        let km = kmeans_cluster(&x, 3, DEFAULT_RESTARTS, 0).unwrap();
        assert!((km.centroids[0] - 0.1).abs() < 1e-12);
        assert!((km.centroids[1] - 5.05).abs() < 1e-12);
        assert!((km.centroids[2] - 9.95).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_lower_index() {
        assert_eq!(nearest(&[0.0, 2.0], 1.0), 0);
        assert_eq!(nearest(&[0.0, 2.0], 1.0000001), 1);
    }

    #[test]
    fn rate_arithmetic() {
        let r = compression_rate(1000, 32, 32).unwrap();
        assert!((r - 32000.0 / 6024.0).abs() < 1e-12);
        assert!((compression_rate(16, 32, 4).unwrap() - 3.2).abs() < 1e-12);
        assert!((compression_rate(4, 32, 4).unwrap() - 128.0 / 136.0).abs() < 1e-12);
        assert!(compression_rate(4, 32, 0).is_err());
    }

    #[test]
    fn bit_range() {
        assert!(clusters_for_bits(0).is_err());
        assert!(clusters_for_bits(33).is_err());
        assert_eq!(clusters_for_bits(5).unwrap(), 32);
        assert_eq!(clusters_for_bits(32).unwrap(), 1 << 32);
    }

    #[test]
    fn packing_round_trip() {
        let v = [0u32, 1, 2, 3, 4, 5, 6, 7, 7, 0, 3];
        let packed = pack_indices(&v, 3);
        assert_eq!(packed.len(), 5);
        assert_eq!(unpack_indices(&packed, 3, v.len()).unwrap(), v);
        assert!(unpack_indices(&packed[..4], 3, v.len()).is_err());
    }

    #[test]
    fn index_bits() {
        let cb = Codebook::<f32>::new(0, 5, vec![0.0; 5], vec![4]).unwrap();
        assert_eq!(cb.index_bits(), 3);
        let cb = Codebook::<f32>::new(0, 5, vec![0.0], vec![0]).unwrap();
        assert_eq!(cb.index_bits(), 1);
        assert!(Codebook::<f32>::new(0, 5, vec![0.0], vec![1]).is_err());
    }
}
