//! Dense tensors and the differentiable primitives the network is built from.
//!
//! Every primitive is a pure function with a matching backward pass that
//! returns exact vector-Jacobian products. Summation order inside each
//! primitive is fixed, so results are reproducible bit-for-bit.

mod conv;
mod ops;
mod tensor;

pub use conv::{
    avgpool_halve, avgpool_halve_backward, conv2d_same, conv2d_same_backward, correlate1d_same,
    correlate1d_same_backward, pooled_len,
};
pub use ops::{
    global_avg_pool, global_avg_pool_backward, linear, linear_backward, relu, relu_backward,
    softmax, softmax_cross_entropy, softmax_cross_entropy_backward,
};
pub use tensor::{GradientPair, Tensor};

pub(crate) use conv::{
    avgpool_halve_backward_acc, avgpool_halve_slice, conv2d_same_backward_acc, conv2d_same_into,
    correlate_same_acc, correlate_same_backward_acc, Conv2dGeometry,
};
pub(crate) use ops::{relu_inplace, relu_mask_inplace};
