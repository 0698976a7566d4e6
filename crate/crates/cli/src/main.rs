//! `discoprobe`: ingest DISRPT data, unify labels, extract attention
//! representations and train probes.
//!
//! Exit codes: 0 success, 1 invalid usage or configuration, 2 bad input data.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use discoprobe::experiment::{PartitionFilter, Regime};
use discoprobe::repr::{Strategy, Subset};
use discoprobe::Split;

#[derive(Parser, Debug)]
#[command(name = "discoprobe", version, about = "Attention probes for discourse relation classification")]
#[command(args_override_self = true)]
pub struct Cli {
    /// `key = value` file mirroring the command flags; flags override it
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Log progress (`-vv` for debug output)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Parse a DISRPT directory into relation and document JSONL
    Ingest(IngestArgs),
    /// Attach unified labels to a relation JSONL file
    Map(MapArgs),
    /// Pool attention over relation spans into an APRD store
    Extract(ExtractArgs),
    /// Train probes for one or more regimes
    Train(TrainArgs),
    /// Evaluate a saved probe on a representation store
    Eval(EvalArgs),
    /// Rewrite report tables for one run or an aggregate of runs
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// DISRPT data root (one directory per dataset, or split files directly)
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
    /// Relation JSONL output
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Document JSONL output [default: <out> with extension .docs.jsonl]
    #[arg(long, value_name = "FILE")]
    pub docs: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MapArgs {
    /// Mapping TSV (pattern, label, target) layered over the built-in table
    #[arg(long, value_name = "FILE")]
    pub mapping: Option<PathBuf>,
    /// Relation JSONL input
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Relation JSONL output with unified labels
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Coverage report output
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// Fail when any label is left unmapped
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Relation JSONL input
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Document JSONL written by `ingest`
    #[arg(long, value_name = "FILE")]
    pub docs: PathBuf,
    /// Attention source: `toy`, or `atsr:<dir>` with `<doc>.<start>.atsr` window dumps
    #[arg(long, default_value = "toy")]
    pub source: String,
    /// Window length in tokens
    #[arg(long, default_value_t = 4000)]
    pub nmax: usize,
    /// Window stride in tokens
    #[arg(long, default_value_t = 2000)]
    pub stride: usize,
    #[arg(long, default_value = "max", value_parser = ["max", "mean", "mean+max"])]
    pub pooling: String,
    #[arg(long, default_value = "all", value_parser = ["all", "inter", "intra"])]
    pub subset: String,
    /// Toy model layers
    #[arg(long, default_value_t = 2)]
    pub toy_layers: usize,
    /// Toy model heads
    #[arg(long, default_value_t = 2)]
    pub toy_heads: usize,
    /// Toy model width
    #[arg(long, default_value_t = 16)]
    pub toy_dim: usize,
    /// Toy model positions (bytes per window)
    #[arg(long, default_value_t = 8192)]
    pub toy_positions: usize,
    /// Toy model weight seed
    #[arg(long, default_value_t = 0)]
    pub toy_seed: u64,
    /// APRD output; metadata goes to <out> with extension .meta.jsonl
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

impl ExtractArgs {
    pub fn strategy(&self) -> Strategy {
        self.pooling.parse().expect("validated by clap")
    }

    pub fn subset(&self) -> Subset {
        self.subset.parse().expect("validated by clap")
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// APRD store written by `extract`
    #[arg(long, value_name = "FILE")]
    pub reprs: PathBuf,
    /// Regimes to run, comma separated
    #[arg(long, value_delimiter = ',', default_value = "mono,multi-lang,multi-all")]
    pub regime: Vec<Regime>,
    /// Also train one probe per layer
    #[arg(long)]
    pub layerwise: bool,
    /// Seeds, comma separated; several seeds are aggregated
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seed: Vec<u64>,
    /// Run directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Mapping file the labels came from, recorded as a hash in the manifest
    #[arg(long, value_name = "FILE")]
    pub mapping: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 512)]
    pub hidden: usize,
    /// Dropout on probe inputs
    #[arg(long, default_value_t = 0.2)]
    pub input_dropout: f64,
    /// Dropout after the hidden layer
    #[arg(long, default_value_t = 0.2)]
    pub hidden_dropout: f64,
    /// Epochs for all-layer probes
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    /// Lower bound on optimizer steps for all-layer probes
    #[arg(long, default_value_t = 10000)]
    pub min_steps: usize,
    /// Epochs for layer-wise probes
    #[arg(long, default_value_t = 20)]
    pub layerwise_epochs: usize,
    /// Lower bound on optimizer steps for layer-wise probes
    #[arg(long, default_value_t = 0)]
    pub layerwise_min_steps: usize,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// PRBM checkpoint
    #[arg(long, value_name = "FILE")]
    pub probe: PathBuf,
    /// APRD store
    #[arg(long, value_name = "FILE")]
    pub reprs: PathBuf,
    /// Rows to score: all, language:<iso>, family:<name> or dataset:<id>
    #[arg(long, default_value = "all")]
    pub partition: PartitionFilter,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Confusion matrix CSV output (a row-normalized copy goes to *_norm.csv)
    #[arg(long, value_name = "FILE")]
    pub confusion: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run directory; repeat to aggregate runs that differ only in seed
    #[arg(long, value_name = "DIR", required = true)]
    pub run: Vec<PathBuf>,
    /// Output directory [default: the run directory when only one is given]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// A problem with flags, configuration or inputs that the user can fix by
/// changing the invocation.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<discoprobe::Error>() {
            return match e {
                discoprobe::Error::Experiment(_) => 1,
                discoprobe::Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 1,
                _ => 2,
            };
        }
    }
    2
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("DISCOPROBE_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Invalid(format!("DISCOPROBE_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match config::expand(argv, &Cli::command()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = init_threads().and_then(|()| match cli.command {
        Cmd::Ingest(a) => commands::ingest(&a),
        Cmd::Map(a) => commands::map(&a),
        Cmd::Extract(a) => commands::extract(&a),
        Cmd::Train(a) => commands::train(&a),
        Cmd::Eval(a) => commands::eval(&a),
        Cmd::Report(a) => commands::report(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
