//! Closed-form FLOP counts for the attention and feed-forward blocks of an
//! encoder layer, and the crossover length below which the feed-forward
//! block is the more expensive of the two.
//!
//! All counts are exact integers. With `n` tokens, hidden size `d`, `h` heads
//! and feed-forward size `d_ffnn`:
//!
//! | term              | FLOPs                   |
//! |-------------------|-------------------------|
//! | Q/K/V projections | `6·n·d² − 3·n·d`        |
//! | scaled `QKᵀ` + softmax | `2·n²·d + h·n²`    |
//! | `A·V`             | `2·n²·d − n·d`          |
//! | output projection | `2·n·d² − n·d`          |
//! | MHA total         | `8·n·d² + 4·n²·d − 4·n·d + h·n²` |
//! | FFNN (`d_ffnn = 4d`) | `16·n·d² − n·d`      |
//!
//! The MHA total is the canonical figure. It exceeds the sum of its four
//! listed terms by exactly `n·d`; both are exposed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture sizes that determine FLOP counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_mha: usize,
    pub heads: usize,
    pub d_ffnn: usize,
    pub layers: usize,
    pub max_len: usize,
}

impl ModelDims {
    pub fn new(
        d_mha: usize,
        heads: usize,
        d_ffnn: usize,
        layers: usize,
        max_len: usize,
    ) -> Result<Self> {
        let dims = Self {
            d_mha,
            heads,
            d_ffnn,
            layers,
            max_len,
        };
        dims.validate()?;
        Ok(dims)
    }

    /// 768 hidden, 12 heads, 3072 feed-forward, 12 layers, 512 tokens.
    pub const PAPER: ModelDims = ModelDims {
        d_mha: 768,
        heads: 12,
        d_ffnn: 3072,
        layers: 12,
        max_len: 512,
    };

    /// Desk-scale 12-layer model.
    pub const DESK: ModelDims = ModelDims {
        d_mha: 64,
        heads: 4,
        d_ffnn: 256,
        layers: 12,
        max_len: 128,
    };

    /// Desk-scale 4-layer model.
    pub const DESK_SMALL: ModelDims = ModelDims {
        d_mha: 64,
        heads: 4,
        d_ffnn: 256,
        layers: 4,
        max_len: 128,
    };

    pub fn preset(name: &str) -> Option<ModelDims> {
        match name {
            "paper" | "base" => Some(Self::PAPER),
            "desk" => Some(Self::DESK),
            "desk-small" => Some(Self::DESK_SMALL),
            _ => None,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_mha / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_mha == 0 || self.heads == 0 || self.layers == 0 || self.max_len == 0 {
            return Err(Error::invalid(format!(
                "dimensions must be positive: {self:?}"
            )));
        }
        if !self.d_mha.is_multiple_of(self.heads) {
            return Err(Error::invalid(format!(
                "hidden size {} is not divisible by head count {}",
                self.d_mha, self.heads
            )));
        }
        if self.d_ffnn < self.d_mha {
            return Err(Error::invalid(format!(
                "feed-forward size {} is smaller than hidden size {}",
                self.d_ffnn, self.d_mha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MhaFlopBreakdown {
    pub linear_proj: u64,
    pub scaled_dot_attn: u64,
    pub attn_times_v: u64,
    pub final_proj: u64,
    /// Sum of the four terms above; this is what an instrumented forward pass measures.
    pub component_sum: u64,
    /// Canonical closed-form total (`component_sum + n·d`).
    pub paper_total: u64,
}

fn check_len(n: u64, dims: &ModelDims) -> Result<()> {
    if n < 1 {
        return Err(Error::invalid("sequence length must be at least 1"));
    }
    if n > dims.max_len as u64 {
        return Err(Error::SequenceTooLong {
            len: n as usize,
            max: dims.max_len,
        });
    }
    Ok(())
}

fn mha_breakdown(n: u64, d: u64, h: u64) -> MhaFlopBreakdown {
    let linear_proj = 6 * n * d * d - 3 * n * d;
    let scaled_dot_attn = 2 * n * n * d + h * n * n;
    let attn_times_v = 2 * n * n * d - n * d;
    let final_proj = 2 * n * d * d - n * d;
    MhaFlopBreakdown {
        linear_proj,
        scaled_dot_attn,
        attn_times_v,
        final_proj,
        component_sum: linear_proj + scaled_dot_attn + attn_times_v + final_proj,
        paper_total: 8 * n * d * d + 4 * n * n * d - 4 * n * d + h * n * n,
    }
}

fn ffnn_count(n: u64, d: u64, d_ffnn: u64) -> u64 {
    let first_proj = 2 * n * d * d_ffnn - n * d_ffnn;
    let gelu = n * d_ffnn;
    let second_proj = 2 * n * d_ffnn * d - n * d;
    first_proj + gelu + second_proj
}

/// Attention-block FLOPs at sequence length `n` (`1 ≤ n ≤ max_len`).
pub fn flops_mha(n: usize, dims: &ModelDims) -> Result<MhaFlopBreakdown> {
    let n = n as u64;
    check_len(n, dims)?;
    Ok(mha_breakdown(n, dims.d_mha as u64, dims.heads as u64))
}

/// Feed-forward FLOPs at sequence length `n`: up-projection, GELU, and
/// down-projection back to the hidden size.
pub fn flops_ffnn(n: usize, dims: &ModelDims) -> Result<u64> {
    let n = n as u64;
    check_len(n, dims)?;
    Ok(ffnn_count(n, dims.d_mha as u64, dims.d_ffnn as u64))
}

/// `⌊(8d² + 3d) / (4d + h)⌋`: the largest `n` for which the feed-forward block
/// costs more than the attention block (for `d_ffnn = 4d`).
pub fn crossover_length(dims: &ModelDims) -> u64 {
    crossover_from(dims.d_mha as u64, dims.heads as u64)
}

pub fn crossover_from(d: u64, h: u64) -> u64 {
    (8 * d * d + 3 * d) / (4 * d + h)
}

/// FFNN minus canonical MHA FLOPs. Defined for any `n ≥ 0` and unbounded by
/// `max_len`, since the difference is a property of the formulas.
pub fn flops_difference(n: u64, dims: &ModelDims) -> i128 {
    let (d, h, f) = (dims.d_mha as u64, dims.heads as u64, dims.d_ffnn as u64);
    if n == 0 {
        return 0;
    }
    ffnn_count(n, d, f) as i128 - mha_breakdown(n, d, h).paper_total as i128
}

/// Sum of MHA (canonical) and FFNN FLOPs over layers, each at the length
/// entering that layer.
pub fn model_total(trace: &[usize], dims: &ModelDims) -> Result<u64> {
    model_total_split(trace, trace, dims)
}

/// Like [`model_total`] but charging the FFNN of layer `l` at `ffnn_trace[l]`.
pub fn model_total_split(
    mha_trace: &[usize],
    ffnn_trace: &[usize],
    dims: &ModelDims,
) -> Result<u64> {
    for t in [mha_trace, ffnn_trace] {
        if t.len() != dims.layers {
            return Err(Error::LengthMismatch {
                op: "model_total",
                expected: dims.layers,
                got: t.len(),
            });
        }
    }
    mha_trace
        .iter()
        .zip(ffnn_trace)
        .try_fold(0u64, |acc, (&n_mha, &n_ffnn)| {
            Ok(acc + flops_mha(n_mha, dims)?.paper_total + flops_ffnn(n_ffnn, dims)?)
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: ModelDims = ModelDims::PAPER;

    #[test]
    fn mha_hand_values() {
        let b = flops_mha(512, &P).unwrap();
        assert_eq!(b.paper_total, 3_222_798_336);
        assert_eq!(b.component_sum, b.paper_total - 512 * 768);
        assert_eq!(
            b.component_sum,
            b.linear_proj + b.scaled_dot_attn + b.attn_times_v + b.final_proj
        );
        assert_eq!(flops_mha(1, &P).unwrap().paper_total, 4_718_604);
        assert!(flops_mha(0, &P).is_err());
        assert!(flops_mha(513, &P).is_err());
    }

    #[test]
    fn ffnn_hand_values() {
        assert_eq!(flops_ffnn(512, &P).unwrap(), 4_831_444_992);
        // 16·768² − 768
        assert_eq!(flops_ffnn(1, &P).unwrap(), 9_436_416);
        assert!(flops_ffnn(512, &P).unwrap() > flops_mha(512, &P).unwrap().paper_total);
        assert!(flops_ffnn(0, &P).is_err());
    }

    #[test]
    fn ffnn_general_form_matches_closed_form_when_four_times_wider() {
        for d in [1u64, 8, 64, 768] {
            for n in [1u64, 3, 100] {
                assert_eq!(ffnn_count(n, d, 4 * d), 16 * n * d * d - n * d);
            }
        }
    }

    #[test]
    fn crossover_values() {
        assert_eq!(crossover_length(&P), 1530);
        let tiny = ModelDims::new(1, 1, 4, 1, 8).unwrap();
        assert_eq!(crossover_length(&tiny), 2);
        assert_eq!(crossover_from(768, 12), 1530);
    }

    #[test]
    fn difference_values() {
        assert_eq!(flops_difference(0, &P), 0);
        assert_eq!(flops_difference(1530, &P), 3_635_280);
        assert_eq!(flops_difference(1531, &P), -1_083_948);
    }

    #[test]
    fn difference_matches_quadratic_form() {
        // n(8d² + 3d) − n²(4d + h), valid for d_ffnn = 4d
        let (d, h) = (768i128, 12i128);
        for n in (0..3000i128).step_by(37) {
            let quad = n * (8 * d * d + 3 * d) - n * n * (4 * d + h);
            assert_eq!(flops_difference(n as u64, &P), quad);
        }
    }

    #[test]
    fn model_totals() {
        assert_eq!(model_total(&[512; 12], &P).unwrap(), 96_650_919_936);
        let one = ModelDims { layers: 1, ..P };
        assert_eq!(model_total(&[512], &one).unwrap(), 8_054_243_328);
        let halved: Vec<usize> = (0..12).map(|l| 512 >> (l.min(9))).collect();
        assert!(model_total(&halved, &P).unwrap() < model_total(&[512; 12], &P).unwrap());
        assert!(model_total(&[512; 11], &P).is_err());
        assert!(model_total(&[0; 12], &P).is_err());
    }

    #[test]
    fn split_estimator_never_exceeds_input_length_estimator() {
        let mha = [512usize; 12];
        let ffnn: Vec<usize> = (0..12).map(|l| 512 - 30 * l).collect();
        let split = model_total_split(&mha, &ffnn, &P).unwrap();
        assert!(split < model_total(&mha, &P).unwrap());
        assert_eq!(
            model_total_split(&mha, &mha, &P).unwrap(),
            model_total(&mha, &P).unwrap()
        );
    }

    #[test]
    fn dims_validation() {
        assert!(ModelDims::new(10, 3, 40, 1, 8).is_err());
        assert!(ModelDims::new(8, 2, 4, 1, 8).is_err());
        assert!(ModelDims::new(8, 2, 32, 1, 8).is_ok());
        assert_eq!(ModelDims::preset("desk").unwrap().layers, 12);
        assert!(ModelDims::preset("nope").is_none());
    }

    #[test]
    fn strictly_increasing_and_concave() {
        let dims = ModelDims { max_len: 4096, ..P };
        let mut prev = (0u64, 0u64);
        for n in 1..=2000 {
            let m = flops_mha(n, &dims).unwrap().paper_total;
            let f = flops_ffnn(n, &dims).unwrap();
            assert!(m > prev.0 && f > prev.1);
            prev = (m, f);
        }
        for n in 1..2000u64 {
            let second = flops_difference(n + 1, &P) - 2 * flops_difference(n, &P)
                + flops_difference(n - 1, &P);
            assert!(second < 0);
        }
    }
}
