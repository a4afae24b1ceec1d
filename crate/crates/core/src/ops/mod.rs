//! Layer primitives with hand-written forward and backward passes.

mod activation;
mod conv;
mod linear;
mod loss;
mod pool;

pub use activation::{relu, relu_backward, relu_backward_in_place, relu_in_place};
pub use conv::{conv3d_backward, conv3d_forward, conv_output_extent, Conv3dGrads};
pub use linear::{linear_backward, linear_forward, LinearGrads};
pub use loss::clamped_l1_loss;
pub use pool::{maxpool3d_backward, maxpool3d_forward, PoolRecord};
