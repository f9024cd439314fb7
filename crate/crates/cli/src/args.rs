use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "ecoflux",
    version,
    about = "Dynamic compartmental-network analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model file and print diagnostics.
    Validate(Common),
    /// Substorages of every compartment and subsystem.
    Simulate(Run),
    /// Throughflows, subthroughflows and residence times.
    Partition(Run),
    /// Transient flows and storages along flow paths.
    Transient(TransientArgs),
    /// Diact flows and, optionally, diact storages.
    Diact(DiactArgs),
    /// Effect, utility, stress and residence-time indices.
    Indices(IndicesArgs),
    /// Pairwise interaction verdicts and strengths.
    Interactions(InteractionArgs),
    /// Full pipeline with a checksummed manifest.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Composite,
    Simple,
    Initial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasisArg {
    Flow,
    Storage,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Model file.
    pub model: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct Run {
    /// Model file; omit with --discrete.
    pub model: Option<PathBuf>,
    /// Sequence of steady snapshots (columns t, z_i, y_i, f_i_j, x_i) instead of a model.
    #[arg(long, value_name = "TABLE")]
    pub discrete: Option<PathBuf>,
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub t1: Option<f64>,
    /// Number of output samples, including both ends.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    /// Output directory; results go to standard output when omitted.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct TransientArgs {
    #[command(flatten)]
    pub run: Run,
    /// Flow path `k: i -> j -> ...` (subsystem k, compartments by name or index).
    #[arg(long = "path", required = true)]
    pub paths: Vec<String>,
    /// Time at which the paths start.
    #[arg(long)]
    pub start: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct DiactArgs {
    #[command(flatten)]
    pub run: Run,
    /// Variants to export (d, i, a, c, t); all by default.
    #[arg(long = "variant", value_delimiter = ',')]
    pub variants: Vec<String>,
    #[arg(long = "kind", value_enum, value_delimiter = ',')]
    pub kinds: Vec<KindArg>,
    /// Integrate diact storages of every pair of the selected variants.
    #[arg(long)]
    pub track_storages: bool,
    #[arg(long)]
    pub storage_start: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct IndicesArgs {
    #[command(flatten)]
    pub run: Run,
    #[arg(long, default_value = "t")]
    pub variant: String,
    #[arg(long, value_enum, default_value = "composite")]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value = "flow")]
    pub basis: BasisArg,
    /// Pair `i,k` (names or indices); repeatable. All pairs when omitted.
    #[arg(long = "pair")]
    pub pairs: Vec<String>,
    /// Average indices and exposures over `T1,T2`.
    #[arg(long, value_delimiter = ',', num_args = 2, value_name = "T1,T2")]
    pub window: Option<Vec<f64>>,
    #[arg(long)]
    pub storage_start: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct InteractionArgs {
    #[command(flatten)]
    pub run: Run,
    #[arg(long, value_enum, default_value = "composite")]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value = "flow")]
    pub basis: BasisArg,
    /// Pair `i,j`; repeatable. All pairs when omitted.
    #[arg(long = "pair")]
    pub pairs: Vec<String>,
    #[arg(long, default_value_t = 0.75)]
    pub commensalism: f64,
    #[arg(long, default_value_t = 0.25)]
    pub competition: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub run: Run,
    #[arg(long = "path")]
    pub paths: Vec<String>,
    /// Reference time of the recovery diagnostic.
    #[arg(long)]
    pub reference: Option<f64>,
    /// Relative band of the recovery diagnostic.
    #[arg(long, default_value_t = 0.01)]
    pub band: f64,
}
