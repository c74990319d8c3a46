use serde::{Deserialize, Serialize};

use crate::encoder::weights::{EncoderWeights, LayerWeights, Linear};
use crate::error::{Error, Result};
use crate::numerics::{
    add_assign, add_row_bias, gelu, layer_norm, matmul, scaled_softmax_masked, Block, DenseMatrix,
    FlopKey, FlopLedger, MemoryMeter,
};
use crate::pruning::{
    batch_width, importance_scores, prune_mask, repack, repack_padded, MaskUpdate, PruneConfig,
};
use crate::scalar::Scalar;

/// Token ids with their attention mask and the positions of CLS and every SEP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    /// `false` exactly at PAD positions.
    pub mask: Vec<bool>,
    pub protected: Vec<usize>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn content_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// FLOP ledger and activation-memory meter threaded through a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Instruments {
    pub ledger: FlopLedger,
    pub meter: MemoryMeter,
}

impl Instruments {
    pub fn new() -> Self {
        Self::default()
    }

    fn track<T: Scalar>(&mut self, m: DenseMatrix<T>) -> DenseMatrix<T> {
        self.meter.track(m)
    }

    fn release<T: Scalar>(&mut self, m: DenseMatrix<T>) {
        self.meter.release(m)
    }
}

/// Row `i` is `token_embedding[id_i] + position_embedding[i]`.
pub fn embed<T: Scalar>(
    sequence: &TokenSequence,
    weights: &EncoderWeights<T>,
) -> Result<DenseMatrix<T>> {
    let cfg = &weights.config;
    let len = sequence.len();
    if len == 0 {
        return Err(Error::invalid("cannot embed an empty sequence"));
    }
    if len > cfg.dims.max_len {
        return Err(Error::SequenceTooLong {
            len,
            max: cfg.dims.max_len,
        });
    }
    let mut out = DenseMatrix::zeros(len, cfg.dims.d_mha)?;
    for (pos, &id) in sequence.ids.iter().enumerate() {
        if id as usize >= cfg.vocab_size {
            return Err(Error::TokenOutOfRange {
                id,
                position: pos,
                vocab: cfg.vocab_size,
            });
        }
        let tok = weights.token_embedding.row(id as usize);
        let p = weights.position_embedding.row(pos);
        for ((o, &a), &b) in out.row_mut(pos).iter_mut().zip(tok).zip(p) {
            *o = a + b;
        }
    }
    Ok(out)
}

fn linear<T: Scalar>(
    x: &DenseMatrix<T>,
    lin: &Linear<T>,
    layer: usize,
    block: Block,
    inst: &mut Instruments,
) -> Result<DenseMatrix<T>> {
    let mut y = matmul(
        x,
        &lin.weight,
        Some(&mut inst.ledger),
        FlopKey::new(layer, block),
    )?;
    add_row_bias(
        &mut y,
        &lin.bias,
        Some(&mut inst.ledger),
        FlopKey::new(layer, Block::Other),
    )?;
    Ok(inst.track(y))
}

/// Multi-head self-attention followed by residual and layer norm.
///
/// Returns `LayerNorm(x + MHA(x))` and the per-head attention probabilities
/// (`S × S`, as used for the value mixing). Both are tracked by the meter;
/// the caller releases them.
pub fn mha_forward<T: Scalar>(
    hidden: &DenseMatrix<T>,
    mask: &[bool],
    layer: &LayerWeights<T>,
    layer_index: usize,
    eps: T,
    inst: &mut Instruments,
) -> Result<(DenseMatrix<T>, Vec<DenseMatrix<T>>)> {
    if hidden.rows() != mask.len() {
        return Err(Error::LengthMismatch {
            op: "mha_forward",
            expected: hidden.rows(),
            got: mask.len(),
        });
    }
    if hidden.cols() != layer.output.inputs() {
        return Err(Error::ShapeMismatch {
            op: "mha_forward",
            left: hidden.shape(),
            right: layer.output.weight.shape(),
        });
    }
    let key = FlopKey::new(layer_index, Block::Mha);
    let head_dim = layer.output.inputs() / layer.heads.len();
    let scale = T::from_usize_lossy(head_dim).sqrt().recip();

    let mut context = inst.track(DenseMatrix::zeros(hidden.rows(), hidden.cols())?);
    let mut attention = Vec::with_capacity(layer.heads.len());
    for (h, head) in layer.heads.iter().enumerate() {
        let q = linear(hidden, &head.query, layer_index, Block::Mha, inst)?;
        let k = linear(hidden, &head.key, layer_index, Block::Mha, inst)?;
        let v = linear(hidden, &head.value, layer_index, Block::Mha, inst)?;
        let kt = inst.track(k.transpose());
        inst.release(k);
        let scores = matmul(&q, &kt, Some(&mut inst.ledger), key)?;
        let scores = inst.track(scores);
        inst.release(q);
        inst.release(kt);
        let probs = scaled_softmax_masked(&scores, scale, mask, Some(&mut inst.ledger), key)?;
        let probs = inst.track(probs);
        inst.release(scores);
        let mixed = matmul(&probs, &v, Some(&mut inst.ledger), key)?;
        let mixed = inst.track(mixed);
        inst.release(v);
        context.set_column_block(h * head_dim, &mixed)?;
        inst.release(mixed);
        attention.push(probs);
    }
    let mut out = linear(&context, &layer.output, layer_index, Block::Mha, inst)?;
    inst.release(context);
    add_assign(
        &mut out,
        hidden,
        Some(&mut inst.ledger),
        FlopKey::new(layer_index, Block::Other),
    )?;
    let norm = &layer.attention_norm;
    let y = inst.track(layer_norm(&out, &norm.gain, &norm.bias, eps)?);
    inst.release(out);
    Ok((y, attention))
}

/// `LayerNorm(y + Linear₂(GELU(Linear₁(y))))`. The result is tracked by the meter.
pub fn ffnn_forward<T: Scalar>(
    hidden: &DenseMatrix<T>,
    layer: &LayerWeights<T>,
    layer_index: usize,
    eps: T,
    inst: &mut Instruments,
) -> Result<DenseMatrix<T>> {
    if hidden.cols() != layer.ffnn_in.inputs() {
        return Err(Error::ShapeMismatch {
            op: "ffnn_forward",
            left: hidden.shape(),
            right: layer.ffnn_in.weight.shape(),
        });
    }
    let up = linear(hidden, &layer.ffnn_in, layer_index, Block::Ffnn, inst)?;
    let act = gelu(
        &up,
        Some(&mut inst.ledger),
        FlopKey::new(layer_index, Block::Ffnn),
    );
    let act = inst.track(act);
    inst.release(up);
    let mut down = linear(&act, &layer.ffnn_out, layer_index, Block::Ffnn, inst)?;
    inst.release(act);
    add_assign(
        &mut down,
        hidden,
        Some(&mut inst.ledger),
        FlopKey::new(layer_index, Block::Other),
    )?;
    let norm = &layer.ffnn_norm;
    let out = inst.track(layer_norm(&down, &norm.gain, &norm.bias, eps)?);
    inst.release(down);
    Ok(out)
}

/// Result of one encoder layer on one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput<T> {
    pub hidden: DenseMatrix<T>,
    pub mask: Vec<bool>,
    pub protected: Vec<usize>,
    /// Per-head attention probabilities over the layer's input positions.
    pub attention: Vec<DenseMatrix<T>>,
    /// Present when the schedule pruned at this layer.
    pub update: Option<MaskUpdate>,
}

/// One encoder layer on a single sequence: attention, then (when scheduled)
/// scoring, mask update and repacking, then the feed-forward block.
///
/// The returned hidden state stays tracked by the meter; the returned
/// attention is not.
#[allow(clippy::too_many_arguments)]
pub fn encoder_layer_forward<T: Scalar>(
    hidden: DenseMatrix<T>,
    mask: &[bool],
    protected: &[usize],
    layer: &LayerWeights<T>,
    prune: &PruneConfig,
    layer_index: usize,
    eps: T,
    inst: &mut Instruments,
) -> Result<LayerOutput<T>> {
    let (mut y, attention) = mha_forward(&hidden, mask, layer, layer_index, eps, inst)?;
    inst.release(hidden);
    let mut mask = mask.to_vec();
    let mut protected = protected.to_vec();
    let mut update = None;
    if prune.schedule.applies(layer_index) {
        let scores = importance_scores(&attention, &mask, &protected)?;
        let u = prune_mask(&scores, &mask, prune.alpha)?;
        let packed = repack(&y, &u, prune.merge)?;
        let packed_hidden = inst.track(packed.hidden);
        inst.release(std::mem::replace(&mut y, packed_hidden));
        mask = packed.mask;
        protected = packed.protected;
        update = Some(u);
    }
    for a in &attention {
        inst.meter.free_bytes(a.byte_size());
    }
    let out = ffnn_forward(&y, layer, layer_index, eps, inst)?;
    inst.release(y);
    Ok(LayerOutput {
        hidden: out,
        mask,
        protected,
        attention,
        update,
    })
}

/// Lengths seen by one sequence at one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTrace {
    /// Unmasked positions entering the layer (the attention block's length).
    pub input_len: usize,
    /// Unmasked positions entering the feed-forward block, after any pruning.
    pub ffnn_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput<T> {
    /// `B × d`, the final hidden row at each sequence's CLS position.
    pub cls: DenseMatrix<T>,
    /// `traces[b][l]`
    pub traces: Vec<Vec<LayerTrace>>,
    /// `attention[l][b][head]` when requested.
    pub attention: Option<Vec<Vec<Vec<DenseMatrix<T>>>>>,
}

/// Runs a batch of equally padded sequences through every layer.
///
/// Pruning decisions are made per sequence; after each pruning step the batch
/// is repacked to the widest surviving sequence, and shorter sequences are
/// right-padded and masked. CLS stays at row 0 throughout.
pub fn encoder_forward<T: Scalar>(
    batch: &[TokenSequence],
    weights: &EncoderWeights<T>,
    prune: &PruneConfig,
    inst: &mut Instruments,
    capture_attention: bool,
) -> Result<EncoderOutput<T>> {
    let first = batch.first().ok_or(Error::EmptyBatch)?;
    let width = first.len();
    for s in batch {
        if s.len() != width || s.mask.len() != width {
            return Err(Error::LengthMismatch {
                op: "encoder_forward",
                expected: width,
                got: s.len(),
            });
        }
    }
    let dims = weights.config.dims;
    let eps = T::lit(weights.config.layer_norm_eps);

    let mut hidden: Vec<DenseMatrix<T>> = Vec::with_capacity(batch.len());
    for s in batch {
        let e = embed(s, weights)?;
        hidden.push(inst.track(e));
    }
    let mut masks: Vec<Vec<bool>> = batch.iter().map(|s| s.mask.clone()).collect();
    let mut protected: Vec<Vec<usize>> = batch.iter().map(|s| s.protected.clone()).collect();
    let mut traces = vec![Vec::with_capacity(dims.layers); batch.len()];
    let mut archive = capture_attention.then(Vec::new);

    for (l, layer) in weights.layers.iter().enumerate() {
        let prune_here = prune.schedule.applies(l);
        let mut ys = Vec::with_capacity(batch.len());
        let mut updates = Vec::with_capacity(batch.len());
        let mut layer_attention = Vec::new();
        for (b, x) in hidden.drain(..).enumerate() {
            let (y, attention) = mha_forward(&x, &masks[b], layer, l, eps, inst)?;
            inst.release(x);
            if prune_here {
                let scores = importance_scores(&attention, &masks[b], &protected[b])?;
                updates.push(prune_mask(&scores, &masks[b], prune.alpha)?);
            }
            for a in attention {
                if archive.is_some() {
                    inst.meter.free_bytes(a.byte_size());
                    layer_attention.push(a);
                } else {
                    inst.release(a);
                }
            }
            ys.push(y);
        }
        if let Some(archive) = archive.as_mut() {
            let heads = dims.heads;
            let mut per_seq = Vec::with_capacity(batch.len());
            let mut it = layer_attention.into_iter();
            for _ in 0..batch.len() {
                per_seq.push(it.by_ref().take(heads).collect());
            }
            archive.push(per_seq);
        }

        let input_lens: Vec<usize> = masks.iter().map(|m| count(m)).collect();
        if prune_here {
            let width = batch_width(&updates, prune.merge);
            for (b, u) in updates.iter().enumerate() {
                let packed = repack_padded(&ys[b], u, prune.merge, width)?;
                let packed_hidden = inst.track(packed.hidden);
                let old = std::mem::replace(&mut ys[b], packed_hidden);
                inst.release(old);
                masks[b] = packed.mask;
                protected[b] = packed.protected;
            }
        }
        for (b, t) in traces.iter_mut().enumerate() {
            t.push(LayerTrace {
                input_len: input_lens[b],
                ffnn_len: count(&masks[b]),
            });
        }
        for y in ys {
            let out = ffnn_forward(&y, layer, l, eps, inst)?;
            inst.release(y);
            hidden.push(out);
        }
    }

    let mut cls = DenseMatrix::zeros(batch.len(), dims.d_mha)?;
    for (b, h) in hidden.iter().enumerate() {
        cls.row_mut(b).copy_from_slice(h.row(0));
    }
    let cls = inst.track(cls);
    for h in hidden {
        inst.release(h);
    }
    Ok(EncoderOutput {
        cls,
        traces,
        attention: archive,
    })
}

fn count(mask: &[bool]) -> usize {
    mask.iter().filter(|&&m| m).count()
}

/// Affine classifier head over CLS vectors.
pub fn classify<T: Scalar>(cls: &DenseMatrix<T>, head: &Linear<T>) -> Result<DenseMatrix<T>> {
    let mut logits = matmul(cls, &head.weight, None, FlopKey::new(0, Block::Other))?;
    add_row_bias(&mut logits, &head.bias, None, FlopKey::new(0, Block::Other))?;
    Ok(logits)
}
