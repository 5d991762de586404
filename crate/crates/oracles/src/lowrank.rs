//! Random matrices with a prescribed column-space rank.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `k` orthonormal vectors of length `n`, each also orthogonal to the
/// all-ones vector (so column centering leaves them unchanged).
fn orthonormal(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let ones = vec![1.0 / (n as f64).sqrt(); n];
    let mut basis: Vec<Vec<f64>> = vec![ones];
    while basis.len() < k + 1 {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let d = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis.remove(0);
    basis
}

/// Row-major `rows x cols` matrix `U diag(s) V^T` of exact rank `rank`, with
/// singular values drawn from `[1, 2]` and zero-mean columns. `noise` adds
/// i.i.d. Gaussian entries of that standard deviation.
pub fn low_rank(rows: usize, cols: usize, rank: usize, noise: f64, seed: u64) -> Vec<f64> {
    assert!(rank <= cols && rank < rows);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = orthonormal(rows, rank, &mut rng);
    let mut v_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
    let v: Vec<Vec<f64>> = {
        let mut vs: Vec<Vec<f64>> = Vec::new();
        while vs.len() < rank {
            let mut x: Vec<f64> = (0..cols).map(|_| StandardNormal.sample(&mut v_rng)).collect();
            for b in &vs {
                let d = dot(&x, b);
                x.iter_mut().zip(b).for_each(|(p, q): (&mut f64, &f64)| *p -= d * q);
            }
            let norm = dot(&x, &x).sqrt();
            if norm > 1e-6 {
                x.iter_mut().for_each(|p| *p /= norm);
                vs.push(x);
            }
        }
        vs
    };
    let sv = Uniform::new_inclusive(1.0, 2.0).expect("valid range");
    let s: Vec<f64> = (0..rank).map(|_| sv.sample(&mut rng)).collect();
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = (0..rank).map(|i| u[i][r] * s[i] * v[i][c]).sum();
        }
    }
    if noise > 0.0 {
        for x in &mut out {
            let n: f64 = StandardNormal.sample(&mut rng);
            *x += noise * n;
        }
    }
    out
}
