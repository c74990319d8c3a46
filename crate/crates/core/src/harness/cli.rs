use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::encoder::{load_weights, save_weights, EncoderConfig, EncoderWeights};
use crate::error::{Error, Result};
use crate::flops::{crossover_from, flops_difference, flops_ffnn, flops_mha, ModelDims};
use crate::harness::corpus::{load_corpus, synthetic_corpus, FormatMode};
use crate::harness::experiment::{run_experiment, ExperimentReport};
use crate::harness::report::{emit_report, render_report, ReportFormat};
use crate::pruning::{PruneConfig, Schedule};

#[derive(Debug, Parser)]
#[command(
    name = "tokenprune",
    version,
    about = "Encoder inference with attention-guided token pruning and FLOP accounting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a corpus with and without pruning and write a report.
    Run(RunArgs),
    /// Print the analytical FLOP breakdown of one layer at length n.
    Flops(FlopsArgs),
    /// Print the largest length at which the feed-forward block outweighs attention.
    Crossover(CrossoverArgs),
    /// Write seeded weights as a manifest plus binary blob.
    InitWeights(InitWeightsArgs),
    /// Write a synthetic line-delimited corpus.
    GenCorpus(GenCorpusArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Single,
    Pair,
}

impl From<ModeArg> for FormatMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Single => FormatMode::Single,
            ModeArg::Pair => FormatMode::Pair,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScheduleArg {
    None,
    All,
    Even,
    Odd,
}

impl From<ScheduleArg> for Schedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::None => Schedule::None,
            ScheduleArg::All => Schedule::All,
            ScheduleArg::Even => Schedule::Even,
            ScheduleArg::Odd => Schedule::Odd,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Args)]
struct DimsArgs {
    /// Preset (`desk`, `desk-small`, `base`) or `custom`.
    #[arg(long, default_value = "desk")]
    dims: String,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long = "d-ffnn")]
    d_ffnn: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long = "max-len")]
    max_len: Option<usize>,
    #[arg(long, default_value_t = 1024)]
    vocab: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
}

impl DimsArgs {
    fn resolve(&self) -> Result<EncoderConfig> {
        let dims = if self.dims == "custom" {
            let need = |v: Option<usize>, flag: &str| {
                v.ok_or_else(|| Error::invalid(format!("--dims custom requires --{flag}")))
            };
            let d = need(self.d, "d")?;
            ModelDims::new(
                d,
                need(self.h, "h")?,
                self.d_ffnn.unwrap_or(4 * d),
                need(self.layers, "layers")?,
                need(self.max_len, "max-len")?,
            )?
        } else {
            if self.d.is_some() || self.h.is_some() || self.d_ffnn.is_some() {
                return Err(Error::invalid("--d/--h/--d-ffnn require --dims custom"));
            }
            let mut dims = ModelDims::preset(&self.dims)
                .ok_or_else(|| Error::invalid(format!("unknown dims preset `{}`", self.dims)))?;
            if let Some(l) = self.layers {
                dims.layers = l;
            }
            if let Some(m) = self.max_len {
                dims.max_len = m;
            }
            dims.validate()?;
            dims
        };
        EncoderConfig::new(dims, self.vocab, self.classes)
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Line-delimited JSON corpus.
    #[arg(
        long,
        required_unless_present = "synthetic",
        conflicts_with = "synthetic"
    )]
    corpus: Option<PathBuf>,
    /// Generate this many synthetic items instead of reading a corpus.
    #[arg(long)]
    synthetic: Option<usize>,
    #[arg(long, value_enum, default_value = "single")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "all")]
    schedule: ScheduleArg,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    alpha: f64,
    /// Average pruned rows into one row (default).
    #[arg(long, overrides_with = "no_merge")]
    merge: bool,
    /// Drop pruned rows.
    #[arg(long = "no-merge", overrides_with = "merge")]
    no_merge: bool,
    #[arg(long = "batch-size", default_value_t = 8)]
    batch_size: usize,
    /// Seed for generated weights and the synthetic corpus.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    dims: DimsArgs,
    /// Weight manifest; overrides the dims flags.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Output path; the report goes to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Defaults to the report path's extension, else json.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, Args)]
struct FlopsArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    h: usize,
    /// Defaults to 4·d.
    #[arg(long = "d-ffnn")]
    d_ffnn: Option<usize>,
}

#[derive(Debug, Args)]
struct CrossoverArgs {
    #[arg(long)]
    d: u64,
    #[arg(long)]
    h: u64,
}

#[derive(Debug, Args)]
struct InitWeightsArgs {
    #[command(flatten)]
    dims: DimsArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Manifest path; the blob is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenCorpusArgs {
    #[arg(long)]
    n: usize,
    #[arg(long = "min-len", default_value_t = 8)]
    min_len: usize,
    #[arg(long = "max-len", default_value_t = 120)]
    max_len: usize,
    #[arg(long, default_value_t = 1024)]
    vocab: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn cli_main<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Run(args) => run(args, out),
        Command::Flops(args) => flops(args, out),
        Command::Crossover(args) => {
            if args.d == 0 || args.h == 0 {
                return Err(Error::invalid("--d and --h must be positive"));
            }
            say(out, format_args!("{}", crossover_from(args.d, args.h)))
        }
        Command::InitWeights(args) => {
            let cfg = args.dims.resolve()?;
            let w = EncoderWeights::<f32>::seeded(cfg, args.seed)?;
            let manifest = save_weights(&w, &args.out)?;
            say(
                out,
                format_args!(
                    "wrote {} tensors to {}",
                    manifest.tensors.len(),
                    args.out.display()
                ),
            )
        }
        Command::GenCorpus(args) => {
            let corpus =
                synthetic_corpus(args.n, args.min_len, args.max_len, args.vocab, args.seed)?;
            write_file(&args.out, &corpus.to_jsonl())?;
            say(
                out,
                format_args!("wrote {} items to {}", corpus.len(), args.out.display()),
            )
        }
    }
}

fn say(out: &mut dyn Write, args: std::fmt::Arguments<'_>) -> Result<()> {
    writeln!(out, "{args}").map_err(|e| Error::io("<stdout>", e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn flops(args: FlopsArgs, out: &mut dyn Write) -> Result<()> {
    let d_ffnn = args.d_ffnn.unwrap_or(4 * args.d);
    let dims = ModelDims::new(args.d, args.h, d_ffnn, 1, args.n.max(1))?;
    let mha = flops_mha(args.n, &dims)?;
    let ffnn = flops_ffnn(args.n, &dims)?;
    let text = format!(
        "n={n} d={d} h={h} d_ffnn={d_ffnn}\n\
         MHA {total}\n\
         \x20 linear_proj {lp}\n\
         \x20 scaled_dot_attn {sda}\n\
         \x20 attn_times_v {av}\n\
         \x20 final_proj {fp}\n\
         \x20 component_sum {cs}\n\
         FFNN {ffnn}\n\
         FFNN-MHA {diff}\n\
         crossover {cross}",
        n = args.n,
        d = args.d,
        h = args.h,
        total = mha.paper_total,
        lp = mha.linear_proj,
        sda = mha.scaled_dot_attn,
        av = mha.attn_times_v,
        fp = mha.final_proj,
        cs = mha.component_sum,
        diff = ffnn as i128 - mha.paper_total as i128,
        cross = crossover_from(args.d as u64, args.h as u64),
    );
    debug_assert_eq!(
        flops_difference(args.n as u64, &dims),
        ffnn as i128 - mha.paper_total as i128
    );
    say(out, format_args!("{text}"))
}

fn run(args: RunArgs, out: &mut dyn Write) -> Result<()> {
    let (weights, seed) = match &args.weights {
        Some(path) => (load_weights::<f32>(path)?, None),
        None => {
            let cfg = args.dims.resolve()?;
            (EncoderWeights::seeded(cfg, args.seed)?, Some(args.seed))
        }
    };
    let dims = weights.config.dims;
    let mode = FormatMode::from(args.mode);
    let corpus = match (&args.corpus, args.synthetic) {
        (Some(path), _) => load_corpus(path, mode, dims.max_len)?,
        (None, Some(n)) => {
            if mode == FormatMode::Pair {
                return Err(Error::invalid(
                    "--synthetic generates single-mode items only",
                ));
            }
            let max = dims.max_len.saturating_sub(2);
            synthetic_corpus(n, max.min(8), max, weights.config.vocab_size, args.seed)?
        }
        (None, None) => return Err(Error::invalid("either --corpus or --synthetic is required")),
    };
    let prune = PruneConfig::new(args.alpha, args.schedule.into(), !args.no_merge)?;
    let mut report: ExperimentReport = run_experiment(&corpus, &weights, &prune, args.batch_size)?;
    report.config.seed = seed;

    let format = args
        .format
        .map(ReportFormat::from)
        .or_else(|| args.report.as_deref().map(ReportFormat::from_path))
        .unwrap_or(ReportFormat::Json);
    match &args.report {
        Some(path) => {
            emit_report(&report, path, format)?;
            say(
                out,
                format_args!(
                    "{} items, schedule {}, speedup {:.4}, report {}",
                    report.config.items,
                    report.config.schedule,
                    report.speedup,
                    path.display()
                ),
            )
        }
        None => out
            .write_all(render_report(&report, format)?.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}
