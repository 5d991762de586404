use crate::Scalar;

/// Softmax cross-entropy. Returns the loss and `dL/dlogits`.
pub fn softmax_cross_entropy<S: Scalar>(logits: &[S], label: usize) -> (S, Vec<S>) {
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: S = exps.iter().copied().sum();
    let loss = sum.ln() + max - logits[label];
    let grad = exps
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let p = e / sum;
            if i == label {
                p - S::one()
            } else {
                p
            }
        })
        .collect();
    (loss, grad)
}

pub fn argmax<S: Scalar>(v: &[S]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let (l, g) = softmax_cross_entropy(&[0.0f64, 0.0], 1);
        assert!((l - 2f64.ln()).abs() < 1e-12);
        assert!((g[0] - 0.5).abs() < 1e-12 && (g[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let z = [0.3f64, -1.2, 2.0, 0.5];
        let (_, g) = softmax_cross_entropy(&z, 2);
        for i in 0..z.len() {
            let mut zp = z;
            let mut zm = z;
            zp[i] += 1e-6;
            zm[i] -= 1e-6;
            let fd = (softmax_cross_entropy(&zp, 2).0 - softmax_cross_entropy(&zm, 2).0) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn large_logits_stay_finite() {
        let (l, _) = softmax_cross_entropy(&[1000.0f32, -1000.0], 1);
        assert!(l.is_finite());
        assert_eq!(argmax(&[1.0f32, 3.0, 3.0]), 1);
    }
}
