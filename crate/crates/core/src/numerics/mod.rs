//! Dense linear-algebra kernels with FLOP and activation-memory instrumentation.

mod kernels;
mod ledger;
mod matrix;
mod memory;

pub use kernels::{
    add_assign, add_row_bias, gelu, gelu_scalar, layer_norm, masked_mean_std, matmul, matmul_flops,
    scaled_softmax_masked, seeded_random_matrix, softmax_masked, MeanStd,
};
pub use ledger::{Block, FlopKey, FlopLedger};
pub use matrix::DenseMatrix;
pub use memory::MemoryMeter;
