mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{value_parser, Args, Parser, Subcommand, ValueEnum};

/// Overhead depth-map pedestrian localization.
#[derive(Debug, Parser)]
#[command(name = "pedloc", version, about)]
struct Cli {
    /// Log level (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene dataset from a patch library.
    Synth(SynthArgs),
    /// Train the grid detector on a dataset.
    Train(TrainArgs),
    /// Evaluate localizers on a dataset and write reports.
    Eval(EvalArgs),
    /// Localize pedestrians in a DFM frame or a directory of frames (JSON lines).
    Localize(LocalizeArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Fill a patch library with procedurally drawn silhouettes.
    SeedLibrary(SeedLibraryArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Patch library directory.
    #[arg(long)]
    patches: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of scenes.
    #[arg(long, value_parser = value_parser!(u64).range(1..))]
    count: u64,
    /// Seed of the first scene; scene i uses seed + i.
    #[arg(long)]
    seed: u64,
    /// Grid cells per side.
    #[arg(long)]
    grid: Option<usize>,
    /// Per-cell pedestrian probability.
    #[arg(long)]
    q: Option<f64>,
    /// Mean number of distractors per scene.
    #[arg(long)]
    lambda: Option<f64>,
    /// Scene noise standard deviation in meters.
    #[arg(long)]
    noise_sigma: Option<f32>,
    /// Draw the pedestrian count uniformly from LO..=HI instead of per-cell Bernoulli.
    #[arg(long, value_name = "LO,HI", value_parser = parse_range)]
    count_range: Option<(usize, usize)>,
    /// Disable per-patch augmentation.
    #[arg(long)]
    no_augment: bool,
    /// JSON synthesis config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OptimizerChoice {
    Adam,
    Sgd,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Validation dataset directory.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Checkpoint file written periodically and at the end.
    #[arg(long)]
    out: PathBuf,
    /// Seed for initialization and shuffling. Taken from the checkpoint when resuming.
    #[arg(long, required_unless_present = "resume")]
    seed: Option<u64>,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerChoice>,
    /// Momentum for SGD.
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    lambda_h: Option<f64>,
    #[arg(long)]
    lambda_l2: Option<f64>,
    /// Filters per conv block, comma separated.
    #[arg(long, value_delimiter = ',')]
    conv: Option<Vec<usize>>,
    /// Hidden dense widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    dense: Option<Vec<usize>>,
    /// Save a checkpoint every N epochs.
    #[arg(long, default_value_t = 10, value_parser = value_parser!(u64).range(1..))]
    checkpoint_every: u64,
    /// Loss history CSV; defaults to the checkpoint path with a .csv extension.
    #[arg(long)]
    history: Option<PathBuf>,
    /// JSON training config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub(crate) enum Method {
    Cnn,
    Cluster,
    Both,
}

/// Baseline settings shared by `eval` and `localize`.
#[derive(Debug, Args)]
struct ClusterArgs {
    /// Foreground depth threshold in meters; defaults to 0.3 m above the floor.
    #[arg(long)]
    depth_threshold: Option<f64>,
    #[arg(long)]
    n_samples: Option<usize>,
    /// Dendrogram cut height in meters.
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    min_cluster_size: Option<usize>,
    /// JSON clustering config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    method: Method,
    /// Network checkpoint, required for cnn.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Cell probability threshold for the network.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Seed for the baseline's pixel sampling; required for cluster.
    #[arg(long)]
    seed: Option<u64>,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cluster: ClusterArgs,
}

#[derive(Debug, Args)]
struct LocalizeArgs {
    /// A .dfm frame or a directory of them.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Seed for the baseline's pixel sampling; required for cluster.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cluster: ClusterArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Directory of .dfm frames.
    #[arg(long)]
    frames: PathBuf,
    /// Patch library directory.
    #[arg(long)]
    patches: PathBuf,
    /// Network checkpoint enabling cnn localization.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Built curator UI, served under /ui.
    #[arg(long)]
    ui: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SeedLibraryArgs {
    /// Library directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 24)]
    pedestrians: usize,
    #[arg(long, default_value_t = 8)]
    objects: usize,
    #[arg(long, default_value_t = 8)]
    artifacts: usize,
    /// Grid whose native pixel pitch the patches use.
    #[arg(long, default_value_t = 5)]
    grid: usize,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo = lo.trim().parse::<usize>().map_err(|e| e.to_string())?;
    let hi = hi.trim().parse::<usize>().map_err(|e| e.to_string())?;
    if lo > hi {
        return Err(format!("{lo} > {hi}"));
    }
    Ok((lo, hi))
}

/// A usage problem found after parsing; exits with status 2 like clap's own errors.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).init();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Localize(a) => commands::localize(a),
        Command::Serve(a) => commands::serve(a),
        Command::SeedLibrary(a) => commands::seed_library(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
