//! Dense kernels. Every kernel that the analytical FLOP model covers charges
//! its cost to an optional ledger using fixed conventions:
//!
//! * `M×N` times `N×L` product: `2·M·N·L − M·L`
//! * masked softmax (including the score scaling): 2 per element
//! * GELU: 1 per element
//!
//! Bias and residual additions are charged one per element by the callers
//! under [`Block::Other`](super::Block::Other).

use crate::error::{Error, Result};
use crate::numerics::ledger::charge;
use crate::numerics::{DenseMatrix, FlopKey, FlopLedger};
use crate::scalar::Scalar;

/// Logit assigned to masked keys before exponentiation.
const MASKED_LOGIT: f64 = -1.0e9;

/// FLOPs of an `m×n` by `n×l` product.
pub const fn matmul_flops(m: usize, n: usize, l: usize) -> u64 {
    let (m, n, l) = (m as u64, n as u64, l as u64);
    2 * m * n * l - m * l
}

pub fn matmul<T: Scalar>(
    a: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
    ledger: Option<&mut FlopLedger>,
    key: FlopKey,
) -> Result<DenseMatrix<T>> {
    if a.cols() != b.rows() {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (m, n, l) = (a.rows(), a.cols(), b.cols());
    let mut out = DenseMatrix::zeros(m, l)?;
    let bs = b.as_slice();
    for i in 0..m {
        let a_row = a.row(i);
        let out_row = out.row_mut(i);
        for (k, &aik) in a_row.iter().enumerate() {
            let b_row = &bs[k * l..(k + 1) * l];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    charge(ledger, key, matmul_flops(m, n, l));
    Ok(out)
}

/// Row-wise softmax over the keys whose mask bit is set. Masked keys get
/// probability exactly 0; a row with no unmasked key is all zeros.
pub fn softmax_masked<T: Scalar>(
    scores: &DenseMatrix<T>,
    key_mask: &[bool],
    ledger: Option<&mut FlopLedger>,
    key: FlopKey,
) -> Result<DenseMatrix<T>> {
    scaled_softmax_masked(scores, T::one(), key_mask, ledger, key)
}

/// [`softmax_masked`] of `scale · scores`; the scaling is part of the 2-per-element charge.
pub fn scaled_softmax_masked<T: Scalar>(
    scores: &DenseMatrix<T>,
    scale: T,
    key_mask: &[bool],
    ledger: Option<&mut FlopLedger>,
    key: FlopKey,
) -> Result<DenseMatrix<T>> {
    if key_mask.len() != scores.cols() {
        return Err(Error::LengthMismatch {
            op: "softmax_masked",
            expected: scores.cols(),
            got: key_mask.len(),
        });
    }
    let masked = T::lit(MASKED_LOGIT);
    let mut out = scores.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        if !key_mask.iter().any(|&m| m) {
            row.fill(T::zero());
            continue;
        }
        for (v, &m) in row.iter_mut().zip(key_mask) {
            *v = if m { *v * scale } else { masked };
        }
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for (v, &m) in row.iter_mut().zip(key_mask) {
            *v = if m { (*v - max).exp() } else { T::zero() };
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    charge(ledger, key, 2 * (scores.rows() * scores.cols()) as u64);
    Ok(out)
}

/// Per-row normalisation to zero mean and unit (population) variance,
/// followed by `gain ⊙ x + bias`.
pub fn layer_norm<T: Scalar>(
    x: &DenseMatrix<T>,
    gain: &[T],
    bias: &[T],
    epsilon: T,
) -> Result<DenseMatrix<T>> {
    for v in [gain, bias] {
        if v.len() != x.cols() {
            return Err(Error::LengthMismatch {
                op: "layer_norm",
                expected: x.cols(),
                got: v.len(),
            });
        }
    }
    if !(epsilon > T::zero()) {
        return Err(Error::invalid("layer_norm epsilon must be positive"));
    }
    let n = T::from_usize_lossy(x.cols());
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = (var + epsilon).sqrt().recip();
        for ((v, &g), &b) in row.iter_mut().zip(gain).zip(bias) {
            *v = (*v - mean) * inv * g + b;
        }
    }
    Ok(out)
}

/// Tanh-approximated GELU:
/// `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
pub fn gelu<T: Scalar>(
    x: &DenseMatrix<T>,
    ledger: Option<&mut FlopLedger>,
    key: FlopKey,
) -> DenseMatrix<T> {
    let mut out = x.clone();
    for v in out.as_mut_slice() {
        *v = gelu_scalar(*v);
    }
    charge(ledger, key, x.as_slice().len() as u64);
    out
}

#[inline]
pub fn gelu_scalar<T: Scalar>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let k = T::lit(0.044_715);
    let half = T::lit(0.5);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

/// Adds `bias` to every row in place; one FLOP per element.
pub fn add_row_bias<T: Scalar>(
    x: &mut DenseMatrix<T>,
    bias: &[T],
    ledger: Option<&mut FlopLedger>,
    key: FlopKey,
) -> Result<()> {
    if bias.len() != x.cols() {
        return Err(Error::LengthMismatch {
            op: "add_row_bias",
            expected: x.cols(),
            got: bias.len(),
        });
    }
    let cols = x.cols();
    for row in x.as_mut_slice().chunks_exact_mut(cols) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    charge(ledger, key, x.as_slice().len() as u64);
    Ok(())
}

/// Elementwise `x += y`; one FLOP per element.
pub fn add_assign<T: Scalar>(
    x: &mut DenseMatrix<T>,
    y: &DenseMatrix<T>,
    ledger: Option<&mut FlopLedger>,
    key: FlopKey,
) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            op: "add_assign",
            left: x.shape(),
            right: y.shape(),
        });
    }
    for (a, &b) in x.as_mut_slice().iter_mut().zip(y.as_slice()) {
        *a += b;
    }
    charge(ledger, key, x.as_slice().len() as u64);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd<T> {
    pub mean: T,
    /// Population standard deviation.
    pub std: T,
    pub count: usize,
}

/// Mean and population SD of the non-NaN entries. `None` when every entry is NaN.
pub fn masked_mean_std<T: Scalar>(values: &[T]) -> Option<MeanStd<T>> {
    let valid = || values.iter().copied().filter(|v| !v.is_nan());
    let count = valid().count();
    if count == 0 {
        return None;
    }
    let n = T::from_usize_lossy(count);
    let mean = valid().sum::<T>() / n;
    let var = valid().map(|v| (v - mean) * (v - mean)).sum::<T>() / n;
    Some(MeanStd {
        mean,
        std: var.sqrt(),
        count,
    })
}

pub fn seeded_random_matrix<T: Scalar>(
    rows: usize,
    cols: usize,
    seed: u64,
    scale: T,
) -> Result<DenseMatrix<T>> {
    DenseMatrix::seeded_random(rows, cols, seed, scale)
}
