//! Corpus ingestion, experiment driver, report emission and the CLI.

pub mod cli;
pub mod corpus;
pub mod experiment;
pub mod report;

pub use crate::numerics::MemoryMeter;
pub use cli::cli_main;
pub use corpus::{
    encode_sequence, hash_tokenize, load_corpus, parse_corpus, synthetic_corpus, Corpus,
    CorpusItem, FormatMode, ItemTokens, SpecialIds,
};
pub use experiment::{
    encode_batches, run_batches, run_experiment, AnalyticalFlops, EmpiricalFlops, ExperimentReport,
    LayerStats, ReportConfig, RunResult, Timing,
};
pub use report::{emit_report, read_json_report, render_csv, render_json, ReportFormat};
