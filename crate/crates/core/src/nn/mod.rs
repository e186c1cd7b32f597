//! Minimal tensor core and the CIPS network: dense tensors, same-padding
//! convolution, the ConvLSTM cell, normalization layers, and hand-written
//! forward/backward passes for the fixed model topology.

pub mod cips;
pub mod conv;
pub mod convlstm;
pub(crate) mod gemm;
pub mod layers;
pub mod tensor;

pub use cips::{init_params, param_count, CipsConfig, CipsGradients, CipsModel, CipsTrace, Conv2dParams};
pub use conv::{conv2d, conv2d_backward};
pub use convlstm::{convlstm_cell_step, convlstm_forward, ConvLstmParams, ConvLstmState};
pub use layers::{BatchNorm, LayerNorm};
pub use tensor::Tensor;
