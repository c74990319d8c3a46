//! Attention-guided token pruning.
//!
//! A token's importance is the attention it receives, averaged over heads
//! and over the valid (non-PAD) query rows. Scores of special tokens and PAD
//! are excluded. A token survives when its score lies in the closed range
//! `[μ − α·σ, μ + α·σ]` of the remaining scores (population SD). CLS and
//! every SEP always survive. The surviving rows are then repacked, with the
//! pruned rows either dropped or averaged into a single row placed just
//! before the final SEP.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{masked_mean_std, DenseMatrix};
use crate::scalar::Scalar;

/// Layers at which pruning runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    None,
    All,
    Even,
    Odd,
}

impl Schedule {
    pub fn applies(self, layer_index: usize) -> bool {
        schedule_applies(self, layer_index)
    }
}

pub fn schedule_applies(schedule: Schedule, layer_index: usize) -> bool {
    match schedule {
        Schedule::None => false,
        Schedule::All => true,
        Schedule::Even => layer_index.is_multiple_of(2),
        Schedule::Odd => layer_index % 2 == 1,
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::None => "none",
            Schedule::All => "all",
            Schedule::Even => "even",
            Schedule::Odd => "odd",
        })
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Schedule::None),
            "all" => Ok(Schedule::All),
            "even" => Ok(Schedule::Even),
            "odd" => Ok(Schedule::Odd),
            other => Err(Error::invalid(format!(
                "unknown schedule `{other}` (expected none|all|even|odd)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    /// Width of the keep range in standard deviations.
    pub alpha: f64,
    pub schedule: Schedule,
    /// Average pruned rows into one row instead of dropping them.
    pub merge: bool,
}

impl PruneConfig {
    pub fn new(alpha: f64, schedule: Schedule, merge: bool) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(Error::invalid(format!(
                "alpha must be non-negative, got {alpha}"
            )));
        }
        Ok(Self {
            alpha,
            schedule,
            merge,
        })
    }

    pub fn disabled() -> Self {
        Self {
            alpha: 1.0,
            schedule: Schedule::None,
            merge: true,
        }
    }
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            schedule: Schedule::All,
            merge: true,
        }
    }
}

/// Per-position importance; NaN at protected and PAD positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceScores<T> {
    pub scores: Vec<T>,
    /// Sorted positions of CLS and every SEP.
    pub protected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskUpdate {
    pub old_mask: Vec<bool>,
    pub new_mask: Vec<bool>,
    /// Positions with `new_mask` set, ascending. Includes protected positions.
    pub kept_indices: Vec<usize>,
    /// Unmasked positions dropped by this update, ascending.
    pub pruned_indices: Vec<usize>,
    pub protected: Vec<usize>,
}

impl MaskUpdate {
    /// An update that keeps every unmasked position.
    pub fn keep_all(mask: &[bool], protected: &[usize]) -> Self {
        Self {
            old_mask: mask.to_vec(),
            new_mask: mask.to_vec(),
            kept_indices: positions(mask),
            pruned_indices: Vec::new(),
            protected: sorted_unique(protected),
        }
    }

    pub fn kept_len(&self) -> usize {
        self.kept_indices.len()
    }
}

fn positions(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect()
}

fn sorted_unique(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

fn check_protected(protected: &[usize], mask: &[bool]) -> Result<()> {
    for &p in protected {
        if p >= mask.len() || !mask[p] {
            return Err(Error::invalid(format!(
                "protected position {p} is not an unmasked position"
            )));
        }
    }
    Ok(())
}

/// Mean attention received by each key position, over heads and valid query rows.
pub fn importance_scores<T: Scalar>(
    attention: &[DenseMatrix<T>],
    mask: &[bool],
    protected: &[usize],
) -> Result<ImportanceScores<T>> {
    let s = mask.len();
    if attention.is_empty() {
        return Err(Error::invalid("importance_scores needs at least one head"));
    }
    for a in attention {
        if a.shape() != (s, s) {
            return Err(Error::ShapeMismatch {
                op: "importance_scores",
                left: a.shape(),
                right: (s, s),
            });
        }
    }
    check_protected(protected, mask)?;
    let queries = positions(mask);
    if queries.is_empty() {
        return Err(Error::DegenerateSequence);
    }

    let mut sums = vec![T::zero(); s];
    for a in attention {
        for &q in &queries {
            for (acc, &p) in sums.iter_mut().zip(a.row(q)) {
                *acc += p;
            }
        }
    }
    let denom = T::from_usize_lossy(attention.len() * queries.len());
    let mut scores: Vec<T> = sums
        .into_iter()
        .zip(mask)
        .map(|(v, &m)| if m { v / denom } else { T::nan() })
        .collect();
    for &p in protected {
        scores[p] = T::nan();
    }
    Ok(ImportanceScores {
        scores,
        protected: sorted_unique(protected),
    })
}

/// Keeps positions whose score lies in `[μ − α·σ, μ + α·σ]`; protected positions always.
pub fn prune_mask<T: Scalar>(
    scores: &ImportanceScores<T>,
    mask: &[bool],
    alpha: f64,
) -> Result<MaskUpdate> {
    if scores.scores.len() != mask.len() {
        return Err(Error::LengthMismatch {
            op: "prune_mask",
            expected: mask.len(),
            got: scores.scores.len(),
        });
    }
    if !(alpha >= 0.0) {
        return Err(Error::invalid(format!(
            "alpha must be non-negative, got {alpha}"
        )));
    }
    check_protected(&scores.protected, mask)?;

    let Some(stats) = masked_mean_std(&scores.scores) else {
        return Ok(MaskUpdate::keep_all(mask, &scores.protected));
    };
    // σ = 0 gives the degenerate range [μ, μ] even for α = ∞
    let half_width = if stats.std == T::zero() {
        T::zero()
    } else {
        T::lit(alpha) * stats.std
    };
    let hi = stats.mean + half_width;
    let lo = stats.mean - half_width;

    let mut new_mask: Vec<bool> = scores
        .scores
        .iter()
        .zip(mask)
        .map(|(&s, &m)| m && !s.is_nan() && s >= lo && s <= hi)
        .collect();
    for &p in &scores.protected {
        new_mask[p] = true;
    }
    let pruned_indices = mask
        .iter()
        .zip(&new_mask)
        .enumerate()
        .filter_map(|(i, (&old, &new))| (old && !new).then_some(i))
        .collect();
    Ok(MaskUpdate {
        old_mask: mask.to_vec(),
        kept_indices: positions(&new_mask),
        new_mask,
        pruned_indices,
        protected: sorted_unique(&scores.protected),
    })
}

/// Hidden rows after pruning, with their mask and protected positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Repacked<T> {
    pub hidden: DenseMatrix<T>,
    pub mask: Vec<bool>,
    pub protected: Vec<usize>,
}

impl<T> Repacked<T> {
    pub fn content_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Number of rows `repack` produces for this update.
pub fn repacked_len(update: &MaskUpdate, merge: bool) -> usize {
    update.kept_len() + usize::from(merge && !update.pruned_indices.is_empty())
}

/// Row order after repacking, as source positions; `None` marks the merged row.
fn layout(update: &MaskUpdate, merge: bool) -> Vec<Option<usize>> {
    let mut order: Vec<Option<usize>> = update.kept_indices.iter().map(|&i| Some(i)).collect();
    if merge && !update.pruned_indices.is_empty() {
        // immediately before the final SEP, i.e. the last kept row when it is protected and not CLS
        let ends_with_sep = update
            .kept_indices
            .last()
            .is_some_and(|&last| last != 0 && update.protected.binary_search(&last).is_ok());
        if ends_with_sep {
            order.insert(order.len() - 1, None);
        } else {
            order.push(None);
        }
    }
    order
}

/// Repacks into exactly `width` rows, zero-padding past the content.
pub fn repack_padded<T: Scalar>(
    hidden: &DenseMatrix<T>,
    update: &MaskUpdate,
    merge: bool,
    width: usize,
) -> Result<Repacked<T>> {
    if hidden.rows() != update.new_mask.len() || update.old_mask.len() != update.new_mask.len() {
        return Err(Error::LengthMismatch {
            op: "repack",
            expected: hidden.rows(),
            got: update.new_mask.len(),
        });
    }
    let order = layout(update, merge);
    if width < order.len() || width == 0 {
        return Err(Error::invalid(format!(
            "repack width {width} is smaller than content length {}",
            order.len()
        )));
    }
    let mut out = DenseMatrix::zeros(width, hidden.cols())?;
    let mut protected = Vec::with_capacity(update.protected.len());
    for (dst, src) in order.iter().enumerate() {
        match *src {
            Some(i) => {
                out.row_mut(dst).copy_from_slice(hidden.row(i));
                if update.protected.binary_search(&i).is_ok() {
                    protected.push(dst);
                }
            }
            None => {
                let n = T::from_usize_lossy(update.pruned_indices.len());
                let row = out.row_mut(dst);
                for &p in &update.pruned_indices {
                    for (acc, &v) in row.iter_mut().zip(hidden.row(p)) {
                        *acc += v;
                    }
                }
                for v in row.iter_mut() {
                    *v /= n;
                }
            }
        }
    }
    let mut mask = vec![false; width];
    mask[..order.len()].fill(true);
    Ok(Repacked {
        hidden: out,
        mask,
        protected,
    })
}

/// Single-sequence repack: kept rows in original order, plus the merged row when requested.
pub fn repack<T: Scalar>(
    hidden: &DenseMatrix<T>,
    update: &MaskUpdate,
    merge: bool,
) -> Result<Repacked<T>> {
    repack_padded(hidden, update, merge, repacked_len(update, merge))
}

/// Repacks every sequence to the common width `max(repacked_len)`.
pub fn repack_batch<T: Scalar>(
    hidden: &[DenseMatrix<T>],
    updates: &[MaskUpdate],
    merge: bool,
) -> Result<Vec<Repacked<T>>> {
    if hidden.len() != updates.len() {
        return Err(Error::LengthMismatch {
            op: "repack_batch",
            expected: hidden.len(),
            got: updates.len(),
        });
    }
    let width = batch_width(updates, merge);
    hidden
        .iter()
        .zip(updates)
        .map(|(h, u)| repack_padded(h, u, merge, width))
        .collect()
}

pub fn batch_width(updates: &[MaskUpdate], merge: bool) -> usize {
    updates
        .iter()
        .map(|u| repacked_len(u, merge))
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scores(v: &[f64], protected: &[usize]) -> ImportanceScores<f64> {
        ImportanceScores {
            scores: v.to_vec(),
            protected: protected.to_vec(),
        }
    }

    #[test]
    fn schedule_parity() {
        assert!(schedule_applies(Schedule::Even, 0));
        assert!(!schedule_applies(Schedule::Odd, 0));
        assert!(schedule_applies(Schedule::All, 11));
        assert!(!schedule_applies(Schedule::None, 3));
        assert!(Schedule::Odd.applies(11));
        assert_eq!("even".parse::<Schedule>().unwrap(), Schedule::Even);
        assert!("sometimes".parse::<Schedule>().is_err());
    }

    #[test]
    fn uniform_attention_scores() {
        let a = DenseMatrix::<f64>::filled(4, 4, 0.25).unwrap();
        let s = importance_scores(&[a], &[true; 4], &[0, 3]).unwrap();
        assert!(s.scores[0].is_nan() && s.scores[3].is_nan());
        assert_abs_diff_eq!(s.scores[1], 0.25);
        assert_abs_diff_eq!(s.scores[2], 0.25);
    }

    #[test]
    fn column_means() {
        let a = DenseMatrix::<f64>::from_rows(&[[1.0, 0.0], [1.0, 0.0]]).unwrap();
        let s = importance_scores(&[a], &[true, true], &[]).unwrap();
        assert_eq!(s.scores, vec![1.0, 0.0]);
    }

    #[test]
    fn pad_columns_and_rows_are_ignored() {
        // row 2 is PAD; its (meaningless) probabilities must not leak into the means
        let a = DenseMatrix::<f64>::from_rows(&[[0.5, 0.5, 0.0], [0.1, 0.9, 0.0], [0.0, 0.0, 1.0]])
            .unwrap();
        let s = importance_scores(&[a], &[true, true, false], &[]).unwrap();
        assert_abs_diff_eq!(s.scores[0], 0.3);
        assert_abs_diff_eq!(s.scores[1], 0.7);
        assert!(s.scores[2].is_nan());
    }

    #[test]
    fn heads_are_averaged() {
        let a = DenseMatrix::<f64>::from_rows(&[[1.0, 0.0], [1.0, 0.0]]).unwrap();
        let b = DenseMatrix::<f64>::from_rows(&[[0.0, 1.0], [0.0, 1.0]]).unwrap();
        let s = importance_scores(&[a, b], &[true, true], &[]).unwrap();
        assert_eq!(s.scores, vec![0.5, 0.5]);
    }

    #[test]
    fn scoring_errors() {
        let a = DenseMatrix::<f64>::filled(2, 2, 0.5).unwrap();
        assert!(matches!(
            importance_scores(std::slice::from_ref(&a), &[false, false], &[]),
            Err(Error::DegenerateSequence)
        ));
        assert!(importance_scores(std::slice::from_ref(&a), &[true, true, true], &[]).is_err());
        assert!(importance_scores(std::slice::from_ref(&a), &[true, false], &[1]).is_err());
        assert!(importance_scores::<f64>(&[], &[true, true], &[]).is_err());
    }

    #[test]
    fn range_keeps_middle_token() {
        let s = scores(&[f64::NAN, 0.2, 0.5, 0.8, f64::NAN], &[0, 4]);
        let u = prune_mask(&s, &[true; 5], 1.0).unwrap();
        assert_eq!(u.new_mask, vec![true, false, true, false, true]);
        assert_eq!(u.kept_indices, vec![0, 2, 4]);
        assert_eq!(u.pruned_indices, vec![1, 3]);
    }

    #[test]
    fn zero_spread_keeps_everything() {
        let s = scores(&[f64::NAN, 0.3, 0.3, 0.3, f64::NAN, f64::NAN], &[0, 4]);
        let mask = [true, true, true, true, true, false];
        let u = prune_mask(&s, &mask, 0.0).unwrap();
        assert_eq!(u.new_mask, mask.to_vec());
        assert!(u.pruned_indices.is_empty());
    }

    #[test]
    fn huge_alpha_is_identity() {
        let s = scores(&[f64::NAN, 0.1, 0.9, 0.4, f64::NAN], &[0, 4]);
        let u = prune_mask(&s, &[true; 5], 1e6).unwrap();
        assert_eq!(u.new_mask, vec![true; 5]);
        let u = prune_mask(&s, &[true; 5], f64::INFINITY).unwrap();
        assert_eq!(u.new_mask, vec![true; 5]);
    }

    #[test]
    fn only_special_tokens_means_no_update() {
        let s = scores(&[f64::NAN, f64::NAN, f64::NAN], &[0, 1]);
        let mask = [true, true, false];
        let u = prune_mask(&s, &mask, 1.0).unwrap();
        assert_eq!(u.new_mask, mask.to_vec());
        assert!(u.pruned_indices.is_empty());
    }

    #[test]
    fn prune_mask_rejects_bad_input() {
        let s = scores(&[f64::NAN, 0.5], &[0]);
        assert!(prune_mask(&s, &[true; 3], 1.0).is_err());
        assert!(prune_mask(&s, &[true; 2], -1.0).is_err());
        assert!(prune_mask(&s, &[true; 2], f64::NAN).is_err());
    }

    fn five_rows() -> DenseMatrix<f64> {
        DenseMatrix::from_rows(&[
            [0.0, 0.0],
            [1.0, 10.0],
            [2.0, 20.0],
            [3.0, 30.0],
            [9.0, 90.0],
        ])
        .unwrap()
    }

    fn update_pruning(pruned: &[usize], len: usize, protected: &[usize]) -> MaskUpdate {
        let old = vec![true; len];
        let new: Vec<bool> = (0..len).map(|i| !pruned.contains(&i)).collect();
        MaskUpdate {
            kept_indices: positions(&new),
            pruned_indices: pruned.to_vec(),
            old_mask: old,
            new_mask: new,
            protected: protected.to_vec(),
        }
    }

    #[test]
    fn repack_identity() {
        let h = five_rows();
        let mask = [true, true, true, false, false];
        let u = MaskUpdate::keep_all(&mask, &[0, 2]);
        let r = repack(&h, &u, true).unwrap();
        assert_eq!(r.hidden, h.select_rows(&[0, 1, 2]).unwrap());
        assert_eq!(r.mask, vec![true; 3]);
        assert_eq!(r.protected, vec![0, 2]);
    }

    #[test]
    fn repack_merge_places_mean_before_sep() {
        // rows 1 and 3 pruned (r2, r4 in one-based terms)
        let u = update_pruning(&[1, 3], 5, &[0, 4]);
        let r = repack(&five_rows(), &u, true).unwrap();
        let expected =
            DenseMatrix::from_rows(&[[0.0, 0.0], [2.0, 20.0], [2.0, 20.0], [9.0, 90.0]]).unwrap();
        assert_eq!(r.hidden, expected);
        assert_eq!(r.protected, vec![0, 3]);

        let dropped = repack(&five_rows(), &u, false).unwrap();
        assert_eq!(dropped.hidden.rows(), 3);
        assert_eq!(dropped.hidden.row(1), &[2.0, 20.0]);
        assert_eq!(dropped.protected, vec![0, 2]);
    }

    #[test]
    fn repack_merge_with_pair_layout() {
        // [CLS, a, SEP, b, SEP]: prune `a`, interior SEP stays protected
        let u = update_pruning(&[1], 5, &[0, 2, 4]);
        let r = repack(&five_rows(), &u, true).unwrap();
        assert_eq!(r.hidden.row(3), &[1.0, 10.0]);
        assert_eq!(r.hidden.row(4), &[9.0, 90.0]);
        assert_eq!(r.protected, vec![0, 1, 4]);
    }

    #[test]
    fn repack_batch_pads_to_widest() {
        let h = five_rows();
        let short = update_pruning(&[1, 2, 3], 5, &[0, 4]);
        let long = MaskUpdate::keep_all(&[true; 5], &[0, 4]);
        let out = repack_batch(&[h.clone(), h.clone()], &[short.clone(), long], false).unwrap();
        assert_eq!(out[0].hidden.rows(), 5);
        assert_eq!(out[0].mask, vec![true, true, false, false, false]);
        assert_eq!(out[0].hidden.row(4), &[0.0, 0.0]);
        let alone = repack(&h, &short, false).unwrap();
        assert_eq!(out[0].hidden.select_rows(&[0, 1]).unwrap(), alone.hidden);
        let single = repack_batch(
            std::slice::from_ref(&h),
            std::slice::from_ref(&short),
            false,
        )
        .unwrap();
        assert_eq!(single[0], alone);
    }
}
