//! In-memory labelled image sets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::snn::Shape3;
use crate::Scalar;

/// Per-channel normalization constant (used as both mean and std).
pub const NORM_MEAN_STD: f64 = 0.5;

/// Maps a `[0, 1]` intensity into `[-1, 1]`.
#[inline]
pub fn normalize_pixel(v: f64) -> f64 {
    (v - NORM_MEAN_STD) / NORM_MEAN_STD
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample<S> {
    /// Stable id; selects the sample's spike-encoding stream.
    pub id: u64,
    /// Normalized pixels, `(c, y, x)` order.
    pub image: Vec<S>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<S> {
    pub shape: Shape3,
    pub classes: usize,
    pub samples: Vec<Sample<S>>,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(shape: Shape3, classes: usize, samples: Vec<Sample<S>>) -> Result<Self> {
        for s in &samples {
            if s.image.len() != shape.len() {
                return Err(invalid(format!("sample {} has {} pixels", s.id, s.image.len())));
            }
            if s.label >= classes {
                return Err(invalid(format!("sample {} label {} >= {classes}", s.id, s.label)));
            }
        }
        Ok(Self {
            shape,
            classes,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            shape: self.shape,
            classes: self.classes,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    pub fn take(&self, n: usize) -> Self {
        Self {
            shape: self.shape,
            classes: self.classes,
            samples: self.samples.iter().take(n).cloned().collect(),
        }
    }

    /// Deterministic shuffled split into `(rest, held_out)` where
    /// `held_out` has `round(len * fraction)` samples.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(invalid(format!("split fraction {fraction} outside [0, 1)")));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_out = (self.len() as f64 * fraction).round() as usize;
        let (held, rest) = idx.split_at(n_out);
        let mut rest = rest.to_vec();
        let mut held = held.to_vec();
        rest.sort_unstable();
        held.sort_unstable();
        Ok((self.subset(&rest), self.subset(&held)))
    }

    pub fn cast<T: Scalar>(&self) -> Dataset<T> {
        Dataset {
            shape: self.shape,
            classes: self.classes,
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    id: s.id,
                    image: crate::cast_slice(&s.image),
                    label: s.label,
                })
                .collect(),
        }
    }

    /// Applies `f` to every pixel of every sample.
    pub fn map_pixels(&self, mut f: impl FnMut(u64, usize, S) -> S) -> Self {
        let mut out = self.clone();
        for s in &mut out.samples {
            let id = s.id;
            for (i, v) in s.image.iter_mut().enumerate() {
                *v = f(id, i, *v);
            }
        }
        out
    }
}

/// Random-crop / horizontal-flip augmentation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Augment {
    /// Zero-padding (in normalized units: the padded value is the
    /// normalized black level, -1) before the random crop.
    pub pad: usize,
    pub hflip: bool,
}

impl Augment {
    pub fn apply<S: Scalar, R: Rng>(&self, image: &[S], shape: Shape3, rng: &mut R) -> Vec<S> {
        let pad = self.pad;
        let dy = if pad > 0 { rng.random_range(0..=2 * pad) } else { pad };
        let dx = if pad > 0 { rng.random_range(0..=2 * pad) } else { pad };
        let flip = self.hflip && rng.random_bool(0.5);
        let black = S::of(normalize_pixel(0.0));
        let mut out = vec![black; image.len()];
        for c in 0..shape.c {
            for y in 0..shape.h {
                let sy = y + dy;
                if sy < pad || sy >= shape.h + pad {
                    continue;
                }
                for x in 0..shape.w {
                    let sx = x + dx;
                    if sx < pad || sx >= shape.w + pad {
                        continue;
                    }
                    let src_x = sx - pad;
                    let src_x = if flip { shape.w - 1 - src_x } else { src_x };
                    out[(c * shape.h + y) * shape.w + x] =
                        image[(c * shape.h + sy - pad) * shape.w + src_x];
                }
            }
        }
        out
    }
}
