//! Exact one-dimensional K-means by dynamic programming over sorted data.

/// Minimum within-cluster sum of squares achievable with at most `k`
/// clusters.
pub fn optimal_wcss(values: &[f64], k: usize) -> f64 {
    assert!(k >= 1 && !values.is_empty());
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let mut s = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for i in 0..n {
        s[i + 1] = s[i] + x[i];
        s2[i + 1] = s2[i] + x[i] * x[i];
    }
    // cost of one cluster holding x[i..j]
    let cost = |i: usize, j: usize| {
        let m = (j - i) as f64;
        let sum = s[j] - s[i];
        (s2[j] - s2[i] - sum * sum / m).max(0.0)
    };
    let k = k.min(n);
    let mut dp: Vec<f64> = (0..=n).map(|j| if j == 0 { 0.0 } else { cost(0, j) }).collect();
    for _ in 1..k {
        let mut next = vec![f64::INFINITY; n + 1];
        next[0] = 0.0;
        for j in 1..=n {
            let mut best = dp[j];
            for i in 1..j {
                best = best.min(dp[i] + cost(i, j));
            }
            next[j] = best;
        }
        dp = next;
    }
    dp[n]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable() {
        assert!(optimal_wcss(&[1.0, 1.0, 5.0, 5.0], 2).abs() < 1e-12);
        assert!((optimal_wcss(&[0.0, 2.0], 1) - 2.0).abs() < 1e-12);
    }
}
