//! Dataset ingestion: MNIST IDX files, CIFAR-10 binary batches and a
//! synthetic bar-pattern generator.
//!
//! Pixels are scaled to `[0, 1]` and then normalized with mean 0.5 and std
//! 0.5, so stored values lie in `[-1, 1]`.

use std::path::{Path, PathBuf};

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use spikeprune_core::data::{normalize_pixel, Dataset, Sample};
use spikeprune_core::snn::Shape3;
use spikeprune_core::Dataset32;

use crate::config::{DatasetConfig, DatasetName, SyntheticConfig};
use crate::error::{PipelineError, Result};

/// Test sample ids start here so they never share an encoder stream with
/// training samples.
pub const TEST_ID_BASE: u64 = 1 << 32;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset32,
    pub val: Dataset32,
    pub test: Dataset32,
}

pub fn load_dataset(cfg: &DatasetConfig) -> Result<Splits> {
    let (train, test) = match cfg.name {
        DatasetName::Synthetic => (
            synthetic(&cfg.synthetic, cfg.split_seed, 0, cfg.synthetic.train)?,
            synthetic(&cfg.synthetic, cfg.split_seed ^ 0x7e57, TEST_ID_BASE, cfg.synthetic.test)?,
        ),
        DatasetName::Mnist => {
            let root = cfg.dataset_path()?;
            (
                mnist(&root.join("train-images-idx3-ubyte"), &root.join("train-labels-idx1-ubyte"), 0)?,
                mnist(&root.join("t10k-images-idx3-ubyte"), &root.join("t10k-labels-idx1-ubyte"), TEST_ID_BASE)?,
            )
        }
        DatasetName::Cifar10 => {
            let root = cifar_root(&cfg.dataset_path()?);
            let files: Vec<PathBuf> = (1..=5).map(|i| root.join(format!("data_batch_{i}.bin"))).collect();
            (cifar10(&files, 0)?, cifar10(&[root.join("test_batch.bin")], TEST_ID_BASE)?)
        }
    };
    let train = limit(train, cfg.train_limit);
    let test = limit(test, cfg.test_limit);
    let (train, val) = train.split(cfg.val_fraction, cfg.split_seed)?;
    info!(
        "dataset {:?}: {} train, {} val, {} test",
        cfg.name,
        train.len(),
        val.len(),
        test.len()
    );
    Ok(Splits { train, val, test })
}

fn limit(d: Dataset32, n: Option<usize>) -> Dataset32 {
    match n {
        Some(n) if n < d.len() => d.take(n),
        _ => d,
    }
}

impl DatasetConfig {
    pub fn dataset_path(&self) -> Result<PathBuf> {
        self.path
            .clone()
            .ok_or_else(|| PipelineError::Config(format!("dataset {:?} has no path", self.name)))
    }
}

fn cifar_root(p: &Path) -> PathBuf {
    let nested = p.join("cifar-10-batches-bin");
    if nested.is_dir() {
        nested
    } else {
        p.to_path_buf()
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| PipelineError::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, what: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| PipelineError::format(what.display().to_string(), offset as u64, "truncated header"))
}

/// Parses an IDX image file (`0x00000803`, u8 pixels) into
/// `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], what: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0, what)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(PipelineError::format(
            what.display().to_string(),
            0,
            format!("magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        ));
    }
    let n = be_u32(bytes, 4, what)? as usize;
    let rows = be_u32(bytes, 8, what)? as usize;
    let cols = be_u32(bytes, 12, what)? as usize;
    let need = 16 + n * rows * cols;
    if bytes.len() < need {
        return Err(PipelineError::format(
            what.display().to_string(),
            bytes.len() as u64,
            format!("truncated: {n} images of {rows}x{cols} need {need} bytes"),
        ));
    }
    Ok((n, rows, cols, bytes[16..need].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], what: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, what)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(PipelineError::format(
            what.display().to_string(),
            0,
            format!("magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        ));
    }
    let n = be_u32(bytes, 4, what)? as usize;
    if bytes.len() < 8 + n {
        return Err(PipelineError::format(
            what.display().to_string(),
            bytes.len() as u64,
            format!("truncated: {n} labels need {} bytes", 8 + n),
        ));
    }
    Ok(bytes[8..8 + n].to_vec())
}

pub fn mnist(images: &Path, labels: &Path, id_base: u64) -> Result<Dataset32> {
    let (n, rows, cols, pixels) = parse_idx_images(&read(images)?, images)?;
    let labels_raw = parse_idx_labels(&read(labels)?, labels)?;
    if labels_raw.len() != n {
        return Err(PipelineError::format(
            labels.display().to_string(),
            4,
            format!("{} labels for {n} images", labels_raw.len()),
        ));
    }
    if let Some(pos) = labels_raw.iter().position(|&l| l >= 10) {
        return Err(PipelineError::format(labels.display().to_string(), 8 + pos as u64, "label outside [0, 10)"));
    }
    let px = rows * cols;
    let samples = (0..n)
        .map(|i| Sample {
            id: id_base + i as u64,
            image: pixels[i * px..(i + 1) * px].iter().map(|&b| to_pixel(b)).collect(),
            label: labels_raw[i] as usize,
        })
        .collect();
    Ok(Dataset::new(Shape3::new(1, rows, cols), 10, samples)?)
}

/// Parses concatenated CIFAR-10 records: one label byte then 3x32x32
/// channel-major pixel bytes.
pub fn parse_cifar(bytes: &[u8], what: &Path, id_base: u64) -> Result<Vec<Sample<f32>>> {
    if bytes.len() % CIFAR_RECORD != 0 {
        let whole = bytes.len() / CIFAR_RECORD * CIFAR_RECORD;
        return Err(PipelineError::format(
            what.display().to_string(),
            whole as u64,
            format!("truncated record: {} trailing bytes, records are {CIFAR_RECORD}", bytes.len() - whole),
        ));
    }
    bytes
        .chunks_exact(CIFAR_RECORD)
        .enumerate()
        .map(|(i, rec)| {
            if rec[0] >= 10 {
                return Err(PipelineError::format(
                    what.display().to_string(),
                    (i * CIFAR_RECORD) as u64,
                    format!("label {} outside [0, 10)", rec[0]),
                ));
            }
            Ok(Sample {
                id: id_base + i as u64,
                image: rec[1..].iter().map(|&b| to_pixel(b)).collect(),
                label: rec[0] as usize,
            })
        })
        .collect()
}

pub fn cifar10(files: &[PathBuf], id_base: u64) -> Result<Dataset32> {
    let mut samples = Vec::new();
    for f in files {
        let base = id_base + samples.len() as u64;
        samples.extend(parse_cifar(&read(f)?, f, base)?);
    }
    Ok(Dataset::new(Shape3::new(3, 32, 32), 10, samples)?)
}

fn to_pixel(b: u8) -> f32 {
    normalize_pixel(b as f64 / 255.0) as f32
}

/// Bar patterns on a dark, noisy background. The class picks the bar
/// orientation; position, length, brightness and clutter are random.
pub fn synthetic(cfg: &SyntheticConfig, seed: u64, id_base: u64, count: usize) -> Result<Dataset32> {
    let n = cfg.size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.noise.max(0.0)).map_err(|e| PipelineError::Config(e.to_string()))?;
    let samples = (0..count)
        .map(|i| {
            let label = i % cfg.classes;
            let mut img = vec![0.0f64; n * n];
            let len = rng.random_range(n / 2..=n);
            let off = rng.random_range(0..=n - len);
            let pos = rng.random_range(0..n);
            let level = rng.random_range(0.6..1.0);
            for k in 0..len {
                let (y, x) = match label {
                    0 => (pos, off + k),
                    1 => (off + k, pos),
                    2 => (off + k, off + k),
                    _ => (off + k, n - 1 - (off + k)),
                };
                img[y * n + x] = level;
            }
            for _ in 0..cfg.clutter {
                let p = rng.random_range(0..n * n);
                img[p] = rng.random_range(0.3..0.9);
            }
            let image = img
                .iter()
                .map(|&v| normalize_pixel((v + noise.sample(&mut rng)).clamp(0.0, 1.0)) as f32)
                .collect();
            Sample {
                id: id_base + i as u64,
                image,
                label,
            }
        })
        .collect();
    Ok(Dataset::new(Shape3::new(1, n, n), cfg.classes, samples)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(n: u32, rows: u32, cols: u32, fill: u8) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IDX_IMAGES_MAGIC, n, rows, cols] {
            b.extend(v.to_be_bytes());
        }
        b.extend(std::iter::repeat_n(fill, (n * rows * cols) as usize));
        b
    }

    #[test]
    fn idx_header_fields() {
        let b = idx_images(3, 28, 28, 255);
        let (n, r, c, px) = parse_idx_images(&b, Path::new("x")).unwrap();
        assert_eq!((n, r, c, px.len()), (3, 28, 28, 3 * 784));
    }

    #[test]
    fn idx_bad_magic_reports_offset_zero() {
        let mut b = idx_images(1, 2, 2, 0);
        b[3] = 0x01;
        match parse_idx_images(&b, Path::new("x")) {
            Err(PipelineError::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn idx_truncation_reports_length() {
        let mut b = idx_images(2, 2, 2, 0);
        b.pop();
        match parse_idx_images(&b, Path::new("x")) {
            Err(PipelineError::Format { offset, .. }) => assert_eq!(offset, 23),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cifar_records() {
        let mut b = vec![0u8; 2 * CIFAR_RECORD];
        b[CIFAR_RECORD] = 7;
        let s = parse_cifar(&b, Path::new("x"), 5).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[1].label, s[1].id, s[1].image.len()), (7, 6, 3072));
        assert_eq!(s[0].image[0], -1.0);
        assert!(parse_cifar(&b[..CIFAR_RECORD + 10], Path::new("x"), 0).is_err());
    }

    #[test]
    fn synthetic_is_deterministic_and_balanced() {
        let cfg = SyntheticConfig::default();
        let a = synthetic(&cfg, 4, 0, 100).unwrap();
        let b = synthetic(&cfg, 4, 0, 100).unwrap();
        assert_eq!(a.samples, b.samples);
        assert!(a.samples.iter().flat_map(|s| &s.image).all(|v| (-1.0..=1.0).contains(v)));
        let per_class = (0..4).map(|c| a.samples.iter().filter(|s| s.label == c).count());
        assert!(per_class.into_iter().all(|n| n == 25));
        let c = synthetic(&cfg, 5, 0, 100).unwrap();
        assert_ne!(a.samples, c.samples);
    }
}
