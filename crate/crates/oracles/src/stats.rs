//! Order statistics and operation counts computed the long way.

/// Percentile by full sort and linear interpolation at rank `p/100*(n-1)`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

/// Multiplications of a dense convolution, counted one kernel tap at a time
/// (padding taps included).
#[allow(clippy::too_many_arguments)]
pub fn conv_multiplies(
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    h: usize,
    w: usize,
) -> u64 {
    let h_out = (h + 2 * pad - k) / stride + 1;
    let w_out = (w + 2 * pad - k) / stride + 1;
    let mut n = 0u64;
    for _co in 0..c_out {
        for _oy in 0..h_out {
            for _ox in 0..w_out {
                for _ci in 0..c_in {
                    for _ky in 0..k {
                        for _kx in 0..k {
                            n += 1;
                        }
                    }
                }
            }
        }
    }
    n
}
