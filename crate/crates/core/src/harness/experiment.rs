//! Runs a corpus through the encoder under one pruning configuration and
//! against the unpruned baseline, collecting lengths, FLOPs, memory and time.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::encoder::{encoder_forward, EncoderWeights, Instruments, LayerTrace, TokenSequence};
use crate::error::{Error, Result};
use crate::flops::{model_total, model_total_split, ModelDims};
use crate::harness::corpus::{encode_sequence, Corpus, FormatMode, SpecialIds};
use crate::numerics::{Block, FlopLedger, MemoryMeter};
use crate::pruning::{PruneConfig, Schedule};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub dims: ModelDims,
    pub vocab_size: usize,
    pub mode: FormatMode,
    pub items: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub schedule: Schedule,
    pub merge: bool,
    /// Weight seed, when the weights were generated rather than loaded.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub layer: usize,
    /// Mean unmasked length entering the layer.
    pub mean_kept_length: f64,
    /// Mean unmasked length entering the layer's feed-forward block.
    pub mean_ffnn_length: f64,
    pub mha_flops: u64,
    pub ffnn_flops: u64,
}

/// Formula-based totals, summed over sequences at their unpadded lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyticalFlops {
    /// Both blocks of a layer charged at the length entering it.
    pub input_length: u64,
    /// Feed-forward charged at the length left after pruning.
    pub split_at_prune: u64,
}

/// Ledger readout. Counts include padded rows, since they are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalFlops {
    pub mha: u64,
    pub ffnn: u64,
    /// Bias and residual additions.
    pub other: u64,
    /// `mha + ffnn`
    pub total: u64,
}

impl EmpiricalFlops {
    fn from_ledger(ledger: &FlopLedger) -> Self {
        let mha = ledger.block_total(Block::Mha);
        let ffnn = ledger.block_total(Block::Ffnn);
        Self {
            mha,
            ffnn,
            other: ledger.block_total(Block::Other),
            total: mha + ffnn,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub forward_seconds: f64,
    /// Items per second of forward-pass time.
    pub throughput: f64,
    pub baseline_forward_seconds: f64,
    pub baseline_throughput: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ReportConfig,
    pub layers: Vec<LayerStats>,
    pub analytical_flops: AnalyticalFlops,
    pub empirical_flops: EmpiricalFlops,
    pub baseline_analytical_flops: AnalyticalFlops,
    pub baseline_empirical_flops: EmpiricalFlops,
    /// Baseline empirical total over pruned empirical total.
    pub speedup: f64,
    pub peak_memory_bytes: usize,
    pub baseline_peak_memory_bytes: usize,
    pub timing: Timing,
}

impl ExperimentReport {
    /// The report with every wall-clock field zeroed.
    pub fn without_timing(&self) -> Self {
        Self {
            timing: Timing::default(),
            ..self.clone()
        }
    }
}

/// Per-run measurements, before comparison with a baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// `traces[item][layer]`, in corpus order.
    pub traces: Vec<Vec<LayerTrace>>,
    pub ledger: FlopLedger,
    pub meter: MemoryMeter,
    pub seconds: f64,
}

/// Encodes the corpus into batches, each padded to its longest member.
pub fn encode_batches(
    corpus: &Corpus,
    batch_size: usize,
    max_len: usize,
) -> Result<Vec<Vec<TokenSequence>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyBatch);
    }
    corpus
        .items
        .chunks(batch_size)
        .map(|chunk| {
            let width = chunk
                .iter()
                .map(|i| i.tokens.encoded_len())
                .max()
                .unwrap_or(0);
            if width > max_len {
                return Err(Error::SequenceTooLong {
                    len: width,
                    max: max_len,
                });
            }
            chunk
                .iter()
                .map(|i| encode_sequence(&i.tokens, width, SpecialIds::default()))
                .collect()
        })
        .collect()
}

/// Runs every batch through the encoder with fresh instruments per batch.
/// Ledgers are summed; the memory peak is the largest batch peak.
pub fn run_batches<T: Scalar>(
    batches: &[Vec<TokenSequence>],
    weights: &EncoderWeights<T>,
    prune: &PruneConfig,
) -> Result<RunResult> {
    let mut traces = Vec::new();
    let mut ledger = FlopLedger::new();
    let mut meter = MemoryMeter::new();
    let mut seconds = 0.0;
    for batch in batches {
        let mut inst = Instruments::new();
        let start = Instant::now();
        let out = encoder_forward(batch, weights, prune, &mut inst, false)?;
        seconds += start.elapsed().as_secs_f64();
        inst.meter.release(out.cls);
        traces.extend(out.traces);
        ledger.merge(&inst.ledger);
        meter.merge_max(&inst.meter);
    }
    Ok(RunResult {
        traces,
        ledger,
        meter,
        seconds,
    })
}

fn analytical(traces: &[Vec<LayerTrace>], dims: &ModelDims) -> Result<AnalyticalFlops> {
    let mut out = AnalyticalFlops {
        input_length: 0,
        split_at_prune: 0,
    };
    for t in traces {
        let mha: Vec<usize> = t.iter().map(|l| l.input_len).collect();
        let ffnn: Vec<usize> = t.iter().map(|l| l.ffnn_len).collect();
        out.input_length += model_total(&mha, dims)?;
        out.split_at_prune += model_total_split(&mha, &ffnn, dims)?;
    }
    Ok(out)
}

fn layer_stats(run: &RunResult, layers: usize) -> Vec<LayerStats> {
    let n = run.traces.len() as f64;
    (0..layers)
        .map(|l| {
            let sum = |f: fn(&LayerTrace) -> usize| {
                run.traces.iter().map(|t| f(&t[l])).sum::<usize>() as f64
            };
            LayerStats {
                layer: l,
                mean_kept_length: sum(|t| t.input_len) / n,
                mean_ffnn_length: sum(|t| t.ffnn_len) / n,
                mha_flops: run.ledger.get(l, Block::Mha),
                ffnn_flops: run.ledger.get(l, Block::Ffnn),
            }
        })
        .collect()
}

fn throughput(items: usize, seconds: f64) -> f64 {
    if seconds > 0.0 {
        items as f64 / seconds
    } else {
        0.0
    }
}

/// Runs `corpus` under `prune`, plus an unpruned baseline when the schedule
/// prunes anywhere. With schedule `none` the run is its own baseline.
pub fn run_experiment<T: Scalar>(
    corpus: &Corpus,
    weights: &EncoderWeights<T>,
    prune: &PruneConfig,
    batch_size: usize,
) -> Result<ExperimentReport> {
    weights.check()?;
    let dims = weights.config.dims;
    let batches = encode_batches(corpus, batch_size, dims.max_len)?;
    let run = run_batches(&batches, weights, prune)?;
    let baseline = if prune.schedule == Schedule::None {
        run.clone()
    } else {
        run_batches(&batches, weights, &PruneConfig::disabled())?
    };

    let empirical = EmpiricalFlops::from_ledger(&run.ledger);
    let baseline_empirical = EmpiricalFlops::from_ledger(&baseline.ledger);
    let speedup = if prune.schedule == Schedule::None {
        1.0
    } else {
        baseline_empirical.total as f64 / empirical.total as f64
    };
    Ok(ExperimentReport {
        config: ReportConfig {
            dims,
            vocab_size: weights.config.vocab_size,
            mode: corpus.mode,
            items: corpus.len(),
            batch_size,
            alpha: prune.alpha,
            schedule: prune.schedule,
            merge: prune.merge,
            seed: None,
        },
        layers: layer_stats(&run, dims.layers),
        analytical_flops: analytical(&run.traces, &dims)?,
        empirical_flops: empirical,
        baseline_analytical_flops: analytical(&baseline.traces, &dims)?,
        baseline_empirical_flops: baseline_empirical,
        speedup,
        peak_memory_bytes: run.meter.peak(),
        baseline_peak_memory_bytes: baseline.meter.peak(),
        timing: Timing {
            forward_seconds: run.seconds,
            throughput: throughput(corpus.len(), run.seconds),
            baseline_forward_seconds: baseline.seconds,
            baseline_throughput: throughput(corpus.len(), baseline.seconds),
        },
    })
}
