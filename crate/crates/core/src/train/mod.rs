//! ANN pre-training, conversion and spike-based fine-tuning.

pub mod ann;
pub mod bptt;
pub mod eval;
pub mod loss;
pub mod optim;
pub mod snn;
pub mod surrogate;
pub mod threshold;

use serde::{Deserialize, Serialize};

pub use ann::{ann_logits, ann_sample_gradient, evaluate_ann, train_ann, AnnTrainConfig};
pub use bptt::{snn_sample_gradient, SampleGradient};
pub use eval::{evaluate, EvalResult};
pub use loss::{argmax, softmax_cross_entropy};
pub use optim::{step_lr, Adam, Sgd};
pub use snn::{dropout_masks, train_snn, SnnTrainConfig, SnnTrainer, StepStats};
pub use surrogate::{surrogate_grad, DEFAULT_SURROGATE_SLOPE};
pub use threshold::{balance_thresholds, percentile, BALANCE_PERCENTILE};

/// One line of a training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// `"train"` or `"val"`.
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
}

impl EpochLog {
    pub fn new(epoch: usize, split: &str, loss: f64, accuracy: f64) -> Self {
        Self {
            epoch,
            split: split.to_string(),
            loss,
            accuracy,
        }
    }
}
