//! Optimizers operating on per-layer weight buffers. Weight decay is the
//! L2 form (added to the gradient).

use crate::Scalar;

#[derive(Clone, Debug)]
pub struct Sgd<S> {
    pub momentum: S,
    pub weight_decay: S,
    velocity: Vec<Vec<S>>,
}

impl<S: Scalar> Sgd<S> {
    pub fn new(shapes: &[Vec<S>], momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum: S::of(momentum),
            weight_decay: S::of(weight_decay),
            velocity: shapes.iter().map(|w| vec![S::zero(); w.len()]).collect(),
        }
    }

    pub fn step(&mut self, weights: &mut [Vec<S>], grads: &[Vec<S>], lr: S) {
        for ((w, g), v) in weights.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((wi, &gi), vi) in w.iter_mut().zip(g).zip(v.iter_mut()) {
                let d = gi + self.weight_decay * *wi;
                *vi = self.momentum * *vi + d;
                *wi -= lr * *vi;
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam<S> {
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    pub weight_decay: S,
    step: i32,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(shapes: &[Vec<S>], weight_decay: f64) -> Self {
        Self {
            beta1: S::of(0.9),
            beta2: S::of(0.999),
            eps: S::of(1e-8),
            weight_decay: S::of(weight_decay),
            step: 0,
            m: shapes.iter().map(|w| vec![S::zero(); w.len()]).collect(),
            v: shapes.iter().map(|w| vec![S::zero(); w.len()]).collect(),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, weights: &mut [Vec<S>], grads: &[Vec<S>], lr: S) {
        self.step += 1;
        let bc1 = S::one() - self.beta1.powi(self.step);
        let bc2 = S::one() - self.beta2.powi(self.step);
        let one = S::one();
        for (((w, g), m), v) in weights.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((wi, &gi), mi), vi) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                let d = gi + self.weight_decay * *wi;
                *mi = self.beta1 * *mi + (one - self.beta1) * d;
                *vi = self.beta2 * *vi + (one - self.beta2) * d * d;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *wi -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Step schedule: `lr0 * factor^(epoch / every)`.
pub fn step_lr(lr0: f64, factor: f64, every: usize, epoch: usize) -> f64 {
    lr0 * factor.powi((epoch / every.max(1)) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lr_leaves_weights() {
        let mut w = vec![vec![1.0f64, -2.0]];
        let g = vec![vec![0.5, 0.5]];
        Adam::new(&w, 5e-4).step(&mut w, &g, 0.0);
        Sgd::new(&w, 0.9, 1e-4).step(&mut w, &g, 0.0);
        assert_eq!(w, vec![vec![1.0, -2.0]]);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut w = vec![vec![0.0f64]];
        let g = vec![vec![1.0]];
        let mut opt = Sgd::new(&w, 0.9, 0.0);
        opt.step(&mut w, &g, 0.1);
        opt.step(&mut w, &g, 0.1);
        // v1 = 1, v2 = 1.9
        assert!((w[0][0] + 0.29).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut w = vec![vec![0.0f64]];
        let mut opt = Adam::new(&w, 0.0);
        opt.step(&mut w, &[vec![3.0]], 0.01);
        assert!((w[0][0] + 0.01).abs() < 1e-6);
    }

    #[test]
    fn schedule_halves() {
        assert_eq!(step_lr(1e-4, 0.5, 5, 4), 1e-4);
        assert_eq!(step_lr(1e-4, 0.5, 5, 5), 5e-5);
        assert!((step_lr(0.1, 0.1, 100, 250) - 1e-3).abs() < 1e-15);
    }
}
