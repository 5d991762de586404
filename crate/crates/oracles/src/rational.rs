//! Exact evaluation of the compression-rate and energy formulas.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;

fn int(v: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// `p*b / (p*bits + 2^bits * b)`.
pub fn compression_rate(p: u64, b: u64, bits: u32) -> BigRational {
    let z = BigRational::from_integer(BigInt::from(1u8) << bits as usize);
    let num = int(p) * int(b);
    let den = int(p) * int(bits as u64) + z * int(b);
    num / den
}

/// One layer of an energy comparison: dense operation count and the spike
/// population (spikes over images and neurons) that drives it.
#[derive(Clone, Copy, Debug)]
pub struct OpsLayer {
    pub ann_ops: u64,
    pub spikes: u64,
    pub images: u64,
    pub neurons: u64,
}

/// `sum(ann_ops(parent)) * 4.6 / sum(rate * ann_ops(compressed) * 0.9)`.
pub fn energy_ratio(parent_ops: &[u64], compressed: &[OpsLayer]) -> BigRational {
    let mac = BigRational::new(BigInt::from(46), BigInt::from(10));
    let add = BigRational::new(BigInt::from(9), BigInt::from(10));
    let ann: BigRational = parent_ops.iter().map(|&o| int(o)).sum::<BigRational>() * mac;
    let snn: BigRational = compressed
        .iter()
        .map(|l| int(l.ann_ops) * int(l.spikes) / (int(l.images) * int(l.neurons)))
        .sum::<BigRational>()
        * add;
    ann / snn
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((to_f64(&compression_rate(16, 32, 2)) - 3.2).abs() < 1e-15);
        let l = OpsLayer { ann_ops: 1000, spikes: 1, images: 1, neurons: 1 };
        assert!((to_f64(&energy_ratio(&[1000], &[l])) - 4.6 / 0.9).abs() < 1e-12);
    }
}
