use crate::Scalar;

/// Default peak height of the triangular surrogate derivative.
pub const DEFAULT_SURROGATE_SLOPE: f64 = 0.3;

/// Linear (triangular) surrogate for the spike derivative:
/// `slope * max(0, 1 - |u - v_th| / v_th)`, peaking at `u = v_th` with
/// support `(0, 2 v_th)`.
#[inline]
pub fn surrogate_grad<S: Scalar>(u: S, v_th: S, slope: S) -> S {
    let w = S::one() - (u - v_th).abs() / v_th;
    if w > S::zero() {
        slope * w
    } else {
        S::zero()
    }
}
