//! Binary model files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "SPKMODEL" | version u16 | header_len u32 | header JSON
//! leak f32 | threshold count u32 | thresholds f32...
//! header crc32 u32                     (over every byte before it)
//! per weighted layer, in depth order:
//!   kind u8 (0 dense, 1 codebook) | layer u32 | weight count u32
//!   dense:    weights f32...
//!   codebook: bits u8 | clusters u32 | centroids f32... | packed indices
//!   block crc32 u32
//! ```
//!
//! Packed indices use `max(1, ceil(log2(clusters)))` bits each, LSB first,
//! so a layer of `p` weights stores `ceil(p * bits / 8)` index bytes.

use serde::{Deserialize, Serialize};
use spikeprune_core::quantize::{pack_indices, unpack_indices, Codebook};
use spikeprune_core::snn::{Network, NetworkConfig, ThresholdSet};
use spikeprune_core::{Codebook32, Network32};

use crate::error::{PipelineError, Result};

pub const MAGIC: &[u8; 8] = b"SPKMODEL";
pub const FORMAT_VERSION: u16 = 1;

const KIND_DENSE: u8 = 0;
const KIND_CODEBOOK: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelArtifact {
    pub net: Network32,
    /// Simulation length the network was trained for.
    pub timesteps: usize,
    /// Layers stored as centroid tables; empty for dense models.
    pub codebooks: Vec<Codebook32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    architecture: NetworkConfig,
    timesteps: usize,
    percentile: Option<f64>,
}

impl ModelArtifact {
    pub fn dense(net: Network32, timesteps: usize) -> Self {
        Self {
            net,
            timesteps,
            codebooks: Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            architecture: self.net.config().clone(),
            timesteps: self.timesteps,
            percentile: self.net.thresholds.as_ref().map(|t| t.percentile),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend(FORMAT_VERSION.to_le_bytes());
        out.extend((json.len() as u32).to_le_bytes());
        out.extend(&json);
        out.extend(self.net.leak.to_le_bytes());
        let th: &[f32] = self.net.thresholds.as_ref().map_or(&[], |t| &t.values);
        out.extend((th.len() as u32).to_le_bytes());
        for v in th {
            out.extend(v.to_le_bytes());
        }
        out.extend(crc32fast::hash(&out).to_le_bytes());

        for l in self.net.config().weighted_layers() {
            let start = out.len();
            let w = &self.net.weights[l];
            match self.codebooks.iter().find(|c| c.layer == l) {
                None => {
                    out.push(KIND_DENSE);
                    out.extend((l as u32).to_le_bytes());
                    out.extend((w.len() as u32).to_le_bytes());
                    for v in w {
                        out.extend(v.to_le_bytes());
                    }
                }
                Some(cb) => {
                    out.push(KIND_CODEBOOK);
                    out.extend((l as u32).to_le_bytes());
                    out.extend((cb.assignments.len() as u32).to_le_bytes());
                    out.push(cb.bits as u8);
                    out.extend((cb.centroids.len() as u32).to_le_bytes());
                    for c in &cb.centroids {
                        out.extend(c.to_le_bytes());
                    }
                    out.extend(pack_indices(&cb.assignments, cb.index_bits()));
                }
            }
            let crc = crc32fast::hash(&out[start..]);
            out.extend(crc.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8, "magic")?;
        if magic != MAGIC {
            return Err(PipelineError::format("model", 0, "not a model file (bad magic)"));
        }
        let version = r.u16("version")?;
        if version != FORMAT_VERSION {
            return Err(PipelineError::format(
                "model",
                8,
                format!("format version {version}, this build reads {FORMAT_VERSION}"),
            ));
        }
        let len = r.u32("header length")? as usize;
        let json = r.take(len, "header")?;
        let header: Header = serde_json::from_slice(json)
            .map_err(|e| PipelineError::format("model", 14, format!("header: {e}")))?;
        let leak = r.f32("leak")?;
        let n_th = r.u32("threshold count")? as usize;
        let values = (0..n_th).map(|_| r.f32("thresholds")).collect::<Result<Vec<_>>>()?;
        let header_end = r.pos;
        let crc = r.u32("header checksum")?;
        if crc != crc32fast::hash(&bytes[..header_end]) {
            return Err(PipelineError::format("model", header_end as u64, "header checksum mismatch"));
        }

        let config = header.architecture;
        config.shapes().map_err(|e| PipelineError::format("model", 14, e.to_string()))?;
        let mut weights: Vec<Vec<f32>> = config.layers.iter().map(|_| Vec::new()).collect();
        let mut codebooks = Vec::new();
        for l in config.weighted_layers() {
            let start = r.pos;
            let what = format!("layer {l} weights");
            let truncated = |r: &Reader| {
                PipelineError::format(
                    "model",
                    r.bytes.len() as u64,
                    format!("truncated payload: {what} missing"),
                )
            };
            let kind = r.u8("").map_err(|_| truncated(&r))?;
            let idx = r.u32("").map_err(|_| truncated(&r))? as usize;
            if idx != l {
                return Err(PipelineError::format("model", start as u64 + 1, format!("expected block for layer {l}, found {idx}")));
            }
            let p = r.u32("").map_err(|_| truncated(&r))? as usize;
            let expected = config.layers[l].param_count();
            if p != expected {
                return Err(PipelineError::format(
                    "model",
                    start as u64 + 5,
                    format!("layer {l} holds {p} weights, architecture needs {expected}"),
                ));
            }
            match kind {
                KIND_DENSE => {
                    weights[l] = (0..p).map(|_| r.f32("")).collect::<Result<_>>().map_err(|_| truncated(&r))?;
                }
                KIND_CODEBOOK => {
                    let bits = r.u8("").map_err(|_| truncated(&r))? as u32;
                    let z = r.u32("").map_err(|_| truncated(&r))? as usize;
                    let centroids: Vec<f32> = (0..z).map(|_| r.f32("")).collect::<Result<_>>().map_err(|_| truncated(&r))?;
                    let ib = index_bits(z);
                    let packed = r.take((p * ib as usize).div_ceil(8), "").map_err(|_| truncated(&r))?;
                    let assignments = unpack_indices(packed, ib, p)?;
                    let cb = Codebook::new(l, bits, centroids, assignments)
                        .map_err(|e| PipelineError::format("model", start as u64, format!("layer {l}: {e}")))?;
                    weights[l] = cb.weights();
                    codebooks.push(cb);
                }
                k => {
                    return Err(PipelineError::format("model", start as u64, format!("layer {l}: unknown block kind {k}")));
                }
            }
            let block_end = r.pos;
            let crc = r.u32("").map_err(|_| truncated(&r))?;
            if crc != crc32fast::hash(&bytes[start..block_end]) {
                return Err(PipelineError::format("model", block_end as u64, format!("layer {l} checksum mismatch")));
            }
        }
        if r.pos != bytes.len() {
            return Err(PipelineError::format("model", r.pos as u64, "trailing bytes after the last layer"));
        }
        let thresholds = header.percentile.map(|percentile| ThresholdSet { values, percentile });
        let net = Network::from_parts(config, weights, thresholds, leak)?;
        Ok(Self {
            net,
            timesteps: header.timesteps,
            codebooks,
        })
    }
}

fn index_bits(clusters: usize) -> u32 {
    (usize::BITS - clusters.saturating_sub(1).leading_zeros()).max(1)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(PipelineError::format(
                "model",
                self.bytes.len() as u64,
                format!("truncated {what}"),
            )),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}
