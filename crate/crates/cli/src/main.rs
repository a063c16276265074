mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "sfx", version, about = "Train and evaluate cross-dataset audio embeddings")]
struct Cli {
    /// Worker threads for the compute pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic corpus and its manifest.
    Synth(SynthArgs),
    /// Train a model into a fresh run directory.
    Train(TrainArgs),
    /// Embed a manifest with a trained encoder.
    Extract(ExtractArgs),
    /// Nearest-neighbour probe of embedding tables, or k-fold evaluation.
    Probe(ProbeArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// Corpus spec (TOML, or JSON with a `.json` extension).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Corpus manifest; repeat for several.
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    /// Run directory; must be absent or empty.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    /// Output directory for `train.emb`, `val.emb` and `test.emb`.
    #[arg(long)]
    pub out: PathBuf,
    /// Training config supplying split ratios and seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Split seed (overrides the config's).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Emit raw embeddings instead of z-scores fitted on the training rows.
    #[arg(long)]
    pub no_standardize: bool,
    /// Average the patch embeddings of each file into one row.
    #[arg(long)]
    pub file_level: bool,
    /// Write the text table encoding instead of binary.
    #[arg(long)]
    pub text: bool,
}

#[derive(Args)]
pub struct ProbeArgs {
    /// Reference table.
    #[arg(long, conflicts_with = "kfold", requires = "test")]
    pub train: Option<PathBuf>,
    /// Query table.
    #[arg(long, conflicts_with = "kfold", requires = "train")]
    pub test: Option<PathBuf>,
    /// Report path; a `.per_class.csv` is written beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of folds; needs a fold-annotated `--manifest`.
    #[arg(long, requires = "manifest")]
    pub kfold: Option<usize>,
    #[arg(long)]
    pub manifest: Vec<PathBuf>,
    /// Encoder for probe-only k-fold.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Training config; with `--kfold` and no checkpoint, an encoder is retrained per fold.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset to evaluate when the manifest holds several.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Neighbours in the majority vote.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Average external frame rows in windows of this many frames before probing.
    #[arg(long)]
    pub window_frames: Option<usize>,
    #[arg(long)]
    pub no_standardize: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Extract(a) => commands::extract(a),
        Command::Probe(a) => commands::probe(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
