#![allow(dead_code)]

use proptest::prelude::*;
use tokenprune::encoder::{EncoderConfig, EncoderWeights, TokenSequence};
use tokenprune::numerics::{softmax_masked, DenseMatrix, FlopKey};
use tokenprune::{Block, ModelDims};

/// A masked sequence with CLS at 0, one or more SEPs, and per-head attention.
#[derive(Debug, Clone)]
pub struct Instance {
    pub mask: Vec<bool>,
    pub protected: Vec<usize>,
    pub attention: Vec<DenseMatrix<f64>>,
}

/// Content length, padding, interior SEP positions, heads and attention logits.
pub fn instance() -> impl Strategy<Value = Instance> {
    (2usize..24, 0usize..6, 1usize..4)
        .prop_flat_map(|(content, pad, heads)| {
            let s = content + pad;
            (
                Just(content),
                Just(pad),
                proptest::collection::vec(any::<bool>(), content),
                proptest::collection::vec(proptest::collection::vec(-4.0f64..4.0, s * s), heads),
            )
        })
        .prop_map(|(content, pad, seps, logits)| {
            let s = content + pad;
            let mut mask = vec![true; content];
            mask.resize(s, false);
            // Interior SEPs are rare enough to leave prunable tokens.
            let mut protected: Vec<usize> = (1..content.saturating_sub(1))
                .filter(|&i| seps[i] && i % 5 == 0)
                .collect();
            protected.insert(0, 0);
            protected.push(content - 1);
            protected.dedup();
            let attention = logits
                .into_iter()
                .map(|l| {
                    let m = DenseMatrix::from_vec(s, s, l).unwrap();
                    softmax_masked(&m, &mask, None, FlopKey::new(0, Block::Mha)).unwrap()
                })
                .collect();
            Instance {
                mask,
                protected,
                attention,
            }
        })
}

/// `[CLS, content…, SEP]` padded to `width`, with ids derived from `salt`.
pub fn sequence(content: usize, width: usize, salt: u32) -> TokenSequence {
    let len = content + 2;
    let mut ids = vec![0u32; width];
    ids[0] = 1;
    for (i, id) in ids.iter_mut().enumerate().take(len - 1).skip(1) {
        *id = 3 + (i as u32 * 131 + salt * 977) % 1000;
    }
    ids[len - 1] = 2;
    let mut mask = vec![false; width];
    mask[..len].fill(true);
    TokenSequence {
        ids,
        mask,
        protected: vec![0, len - 1],
    }
}

pub fn desk_weights(dims: ModelDims, seed: u64) -> EncoderWeights<f32> {
    EncoderWeights::seeded(EncoderConfig::desk(dims), seed).unwrap()
}
