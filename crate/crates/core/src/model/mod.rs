//! The multi-scale convolutional network: temporal block with one kernel
//! length per ratio, asymmetric spatial block (global, hemisphere and
//! quadrant kernels), fusion layer and dense binary head.
//!
//! All arithmetic is `f64`; parameter values are kept binary32-representable
//! at rest so checkpoints are exact.

pub mod blocks;
pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod params;
pub mod tensor;

pub use checkpoint::{load_checkpoint, load_params, save_params};
pub use config::{DerivedShapes, ModelConfig};
pub use network::{
    backward, build, forward, input_tensor, loss, loss_and_grad, positive_probability,
    softmax_cross_entropy, update_running_stats, ForwardCache, LossAndGrad,
};
pub use params::{ModelParams, ParamKind};
pub use tensor::Tensor;
