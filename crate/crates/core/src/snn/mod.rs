//! LIF simulation: Poisson encoding, layer kernels, membrane dynamics and
//! full-network forward passes.

pub mod encode;
pub mod forward;
pub mod layer;
pub mod lif;
pub mod network;

pub use encode::{training_stream, PoissonEncoder, SpikeTensor};
pub use forward::{forward_pass, forward_pass_masked, ForwardOutput, LayerActivity, SpikeRecord};
pub use layer::{layer_apply, LayerKind, LayerSpec, Shape3};
pub use lif::{lif_step, LifConfig, NeuronState, DEFAULT_LEAK};
pub use network::{Network, NetworkConfig, ThresholdSet};
