//! Forward numeric kernels and their reverse-mode gradients.
//!
//! Every kernel is a pure function of its inputs; calling one concurrently on
//! disjoint outputs is safe, and results are bitwise reproducible for a fixed
//! configuration (all reductions run in a fixed serial order).

pub mod activation;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod matmul;
pub mod norm;
pub mod padding;
pub mod pool;

pub use activation::{activation, softmax, Activation};
pub use conv::{conv2d, depthwise_conv2d, ConvSpec};
pub use dense::dense_affine;
pub use norm::{batch_norm, BnMode, BN_EPSILON, BN_MOMENTUM};
pub use padding::Padding;
pub use pool::{global_average_pool, max_pool2d};
