//! Poisson rate coding of normalized images into signed spike trains.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::snn::layer::Shape3;
use crate::Scalar;

/// Spike values indexed by `(t, n, c, y, x)`. Input trains are ternary
/// (`-1, 0, +1`); hidden-layer spikes never live here.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpikeTensor {
    timesteps: usize,
    samples: usize,
    shape: Shape3,
    data: Vec<i8>,
}

impl SpikeTensor {
    pub fn zeros(timesteps: usize, samples: usize, shape: Shape3) -> Self {
        Self {
            timesteps,
            samples,
            shape,
            data: vec![0; timesteps * samples * shape.len()],
        }
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn get(&self, t: usize, n: usize, c: usize, y: usize, x: usize) -> i8 {
        let s = self.shape;
        self.frame(t, n)[(c * s.h + y) * s.w + x]
    }

    /// All pixels of sample `n` at step `t`.
    pub fn frame(&self, t: usize, n: usize) -> &[i8] {
        let len = self.shape.len();
        let off = (t * self.samples + n) * len;
        &self.data[off..off + len]
    }

    pub fn frame_mut(&mut self, t: usize, n: usize) -> &mut [i8] {
        let len = self.shape.len();
        let off = (t * self.samples + n) * len;
        &mut self.data[off..off + len]
    }

    /// Total number of non-zero events.
    pub fn event_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Events emitted by sample `n` over all steps.
    pub fn sample_event_count(&self, n: usize) -> usize {
        (0..self.timesteps)
            .map(|t| self.frame(t, n).iter().filter(|&&v| v != 0).count())
            .sum()
    }
}

/// Counter-based Poisson encoder: the draw for `(stream, t, pixel)` depends
/// only on the seed and those coordinates, so results do not change with
/// batch composition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoissonEncoder {
    pub seed: u64,
}

impl PoissonEncoder {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn fill<S: Scalar>(&self, image: &[S], stream: u64, out: &mut SpikeTensor, n: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng.set_word_pos(0);
        let scale = 1.0 / 4_294_967_296.0;
        for t in 0..out.timesteps {
            let frame = out.frame_mut(t, n);
            for (o, &p) in frame.iter_mut().zip(image) {
                let draw = rng.next_u32() as f64 * scale;
                let p = p.as_f64();
                let prob = p.abs().min(1.0);
                *o = if draw < prob {
                    if p > 0.0 {
                        1
                    } else {
                        -1
                    }
                } else {
                    0
                };
            }
        }
    }

    /// Encodes one image (values in `[-1, 1]`) for `timesteps` steps.
    pub fn encode<S: Scalar>(
        &self,
        image: &[S],
        shape: Shape3,
        timesteps: usize,
        stream: u64,
    ) -> Result<SpikeTensor> {
        self.encode_batch(&[image], shape, timesteps, &[stream])
    }

    pub fn encode_batch<S: Scalar>(
        &self,
        images: &[&[S]],
        shape: Shape3,
        timesteps: usize,
        streams: &[u64],
    ) -> Result<SpikeTensor> {
        if timesteps == 0 {
            return Err(invalid("timestep count must be positive"));
        }
        if images.len() != streams.len() {
            return Err(invalid("one stream id is required per image"));
        }
        let mut out = SpikeTensor::zeros(timesteps, images.len(), shape);
        for (n, (img, &stream)) in images.iter().zip(streams).enumerate() {
            if img.len() != shape.len() {
                return Err(invalid(format!(
                    "image has {} values, shape needs {}",
                    img.len(),
                    shape.len()
                )));
            }
            self.fill(img, stream, &mut out, n);
        }
        Ok(out)
    }
}

/// Stream id for a sample within a training epoch. Evaluation uses the bare
/// sample id (epoch 0 is never used for training).
pub fn training_stream(epoch: usize, sample_id: u64) -> u64 {
    ((epoch as u64 + 1) << 40) ^ sample_id
}
