//! Discrete-time leaky integrate-and-fire dynamics with soft reset.
//!
//! Per step and neuron:
//!
//! ```text
//! v = u + I                 (pre-threshold potential, added to accum)
//! v >  v_th: spike, u = v - v_th
//! v <= v_th: no spike, u = leak * v
//! ```
//!
//! The leak is applied only on the no-spike branch. The threshold test is
//! strict.

use crate::error::{check_len, invalid, Result};
use crate::Scalar;

/// Default membrane leak, `exp(-1/tau_m)` with `tau_m ~ 100` steps.
pub const DEFAULT_LEAK: f64 = 0.9901;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LifConfig<S> {
    pub leak: S,
    pub v_th: S,
}

impl<S: Scalar> LifConfig<S> {
    pub fn new(leak: S, v_th: S) -> Result<Self> {
        if !(leak > S::zero() && leak <= S::one()) {
            return Err(invalid(format!("leak {leak} outside (0, 1]")));
        }
        if !(v_th > S::zero()) || !v_th.is_finite() {
            return Err(invalid(format!("threshold {v_th} must be positive and finite")));
        }
        Ok(Self { leak, v_th })
    }
}

/// Membrane state of one layer of neurons for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuronState<S> {
    pub u: Vec<S>,
    /// Running sum of pre-threshold potentials.
    pub accum: Vec<S>,
    pub spike_count: Vec<u32>,
}

impl<S: Scalar> NeuronState<S> {
    pub fn new(n: usize) -> Self {
        Self {
            u: vec![S::zero(); n],
            accum: vec![S::zero(); n],
            spike_count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Advances every neuron by one step. Writes spikes (0/1) into `spikes` and
/// the pre-threshold potential into `pre` when given.
#[inline]
pub(crate) fn lif_update<S: Scalar>(
    state: &mut NeuronState<S>,
    input: &[S],
    cfg: &LifConfig<S>,
    spikes: &mut [S],
    mut pre: Option<&mut [S]>,
) {
    let n = state.u.len();
    for i in 0..n {
        let v = state.u[i] + input[i];
        state.accum[i] += v;
        if let Some(p) = pre.as_deref_mut() {
            p[i] = v;
        }
        if v > cfg.v_th {
            spikes[i] = S::one();
            state.spike_count[i] += 1;
            state.u[i] = v - cfg.v_th;
        } else {
            spikes[i] = S::zero();
            state.u[i] = cfg.leak * v;
        }
    }
}

/// One LIF step for a layer. Returns the binary spike vector.
pub fn lif_step<S: Scalar>(
    state: &mut NeuronState<S>,
    weighted_input: &[S],
    cfg: &LifConfig<S>,
) -> Result<Vec<S>> {
    check_len("lif_step input", state.len(), weighted_input.len())?;
    let mut spikes = vec![S::zero(); state.len()];
    lif_update(state, weighted_input, cfg, &mut spikes, None);
    Ok(spikes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one(u: f64, input: f64, leak: f64, v_th: f64) -> (f64, f64) {
        let mut s = NeuronState::new(1);
        s.u[0] = u;
        let spikes = lif_step(&mut s, &[input], &LifConfig::new(leak, v_th).unwrap()).unwrap();
        (s.u[0], spikes[0])
    }

    #[test]
    fn quiescent_neuron_stays_at_rest() {
        assert_eq!(one(0.0, 0.0, 0.99, 1.0), (0.0, 0.0));
    }

    #[test]
    fn crossing_fires_and_soft_resets() {
        let (u, o) = one(0.5, 0.6, 0.99, 1.0);
        assert_eq!(o, 1.0);
        assert!((u - 0.1).abs() < 1e-12);
    }

    #[test]
    fn subthreshold_leaks() {
        let (u, o) = one(0.5, 0.3, 0.99, 1.0);
        assert_eq!(o, 0.0);
        assert!((u - 0.792).abs() < 1e-12);
    }

    #[test]
    fn threshold_is_strict() {
        let (u, o) = one(0.0, 1.0, 0.5, 1.0);
        assert_eq!(o, 0.0);
        assert_eq!(u, 0.5);
    }

    #[test]
    fn config_validation() {
        assert!(LifConfig::new(0.0f64, 1.0).is_err());
        assert!(LifConfig::new(1.01f64, 1.0).is_err());
        assert!(LifConfig::new(1.0f64, 0.0).is_err());
        assert!(LifConfig::new(1.0f64, 1.0).is_ok());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut s = NeuronState::<f32>::new(3);
        let cfg = LifConfig::new(1.0, 1.0).unwrap();
        assert!(lif_step(&mut s, &[0.0; 2], &cfg).is_err());
    }

    proptest! {
        #[test]
        fn accum_sums_pre_threshold_potential(inputs in proptest::collection::vec(-2.0f64..2.0, 1..40), leak in 0.5f64..1.0) {
            let cfg = LifConfig::new(leak, 1.0).unwrap();
            let mut s = NeuronState::new(1);
            let mut expected = 0.0;
            for &x in &inputs {
                expected += s.u[0] + x;
                lif_step(&mut s, &[x], &cfg).unwrap();
            }
            prop_assert!((s.accum[0] - expected).abs() < 1e-9);
            prop_assert!(s.spike_count[0] as usize <= inputs.len());
        }
    }
}
