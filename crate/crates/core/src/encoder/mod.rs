//! Transformer encoder stack with a pruning step between attention and
//! feed-forward blocks.

pub mod archive;
mod forward;
mod weights;

pub use archive::{load_weights, save_weights, Manifest, TensorEntry};
pub use forward::{
    classify, embed, encoder_forward, encoder_layer_forward, ffnn_forward, mha_forward,
    EncoderOutput, Instruments, LayerOutput, LayerTrace, TokenSequence,
};
pub use weights::{
    EncoderConfig, EncoderWeights, HeadWeights, LayerWeights, Linear, NormWeights, EMBEDDING_SCALE,
    INIT_SCALE,
};
