//! Small differentiable building blocks for the compression network:
//! forward passes with hand-written backward passes, no tape.

mod adam;
mod checkpoint;
mod conv;
pub mod gradcheck;
mod layers;
mod tensor;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use conv::{conv2d_backward, conv2d_forward, same_padding, ConvLayer};
pub use layers::{
    dense_backward, dense_forward, gap_backward, global_avg_pool, layer_norm, layer_norm_backward, relu, relu_backward,
    softmax, softmax_backward, DenseLayer, LayerNormCache, NormGroup, ReluCache, LAYER_NORM_EPS,
};
pub use tensor::{Real, Tensor};
