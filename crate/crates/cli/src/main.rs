mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use distmc::SearchStrategy;

use failure::Failure;

#[derive(Parser)]
#[command(
    name = "distmc",
    version,
    about = "Distributional matrix completion with Wasserstein nearest neighbors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Impute one cell, or every missing cell, of a panel.
    Impute(ImputeArgs),
    /// Choose the distance threshold for one cell by leave-one-out validation.
    Tune(TuneArgs),
    /// Confidence band for the quantile function of one imputed cell.
    Bands(BandsArgs),
    /// Run a Monte-Carlo study on synthetic matrices.
    Simulate(SimulateArgs),
    /// Check closed-form results against simulation or enumeration.
    Verify(VerifyArgs),
}

#[derive(Args)]
pub struct PanelArgs {
    /// Panel file: long CSV with header `row,col,value`, or JSON when the
    /// name ends in `.json`.
    #[arg(long, short)]
    pub input: PathBuf,
}

#[derive(Args)]
pub struct CellArgs {
    /// Row key of the target cell.
    #[arg(long)]
    pub row: Option<String>,
    /// Column key of the target cell.
    #[arg(long, requires = "row")]
    pub col: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Search {
    Grid,
    Random,
}

impl From<Search> for SearchStrategy {
    fn from(s: Search) -> Self {
        match s {
            Search::Grid => SearchStrategy::LogGrid,
            Search::Random => SearchStrategy::RandomLogUniform,
        }
    }
}

#[derive(Args)]
pub struct NeighborArgs {
    /// Fixed distance threshold. Without it the threshold is tuned per cell.
    #[arg(long, conflicts_with_all = ["budget", "search"])]
    pub eta: Option<f64>,
    /// Number of candidate thresholds when tuning.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Candidate placement when tuning.
    #[arg(long, value_enum)]
    pub search: Option<Search>,
    /// Keep at most this many nearest rows.
    #[arg(long)]
    pub max_neighbors: Option<usize>,
    /// Rows sharing fewer observed columns with the target row are ignored.
    #[arg(long, default_value_t = 1)]
    pub min_overlap: usize,
    /// Use the nearest finite-distance row when no row is within the
    /// threshold.
    #[arg(long)]
    pub fallback_nearest: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct OutputArgs {
    /// Result file; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct ImputeArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    #[command(flatten)]
    pub cell: CellArgs,
    /// Impute every missing cell instead of a single target.
    #[arg(long, conflicts_with_all = ["row", "col"])]
    pub all_missing: bool,
    #[command(flatten)]
    pub neighbors: NeighborArgs,
    /// Tail level of the reported value at risk.
    #[arg(long, default_value_t = 0.05)]
    pub var_alpha: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    #[command(flatten)]
    pub cell: CellArgs,
    /// Number of candidate thresholds.
    #[arg(long, default_value_t = 50)]
    pub budget: usize,
    #[arg(long, value_enum, default_value_t = Search::Grid)]
    pub search: Search,
    /// Lower end of the search range; derived from the row distances when
    /// absent.
    #[arg(long, requires = "eta_max")]
    pub eta_min: Option<f64>,
    #[arg(long, requires = "eta_min")]
    pub eta_max: Option<f64>,
    #[arg(long)]
    pub max_neighbors: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_overlap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum BandKind {
    /// Normal approximation with kernel density estimates of each
    /// neighbor's density.
    Kde,
    /// Percentile bootstrap over neighbors and samples.
    Bootstrap,
}

#[derive(Args)]
pub struct BandsArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    #[command(flatten)]
    pub cell: CellArgs,
    #[command(flatten)]
    pub neighbors: NeighborArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Quantile levels: a count `k` for the levels `1/(k+1), ..., k/(k+1)`,
    /// or a comma separated list.
    #[arg(long, default_value = "0.1,0.25,0.5,0.75,0.9")]
    pub levels: String,
    /// Split `alpha` over the levels so the band holds jointly.
    #[arg(long)]
    pub simultaneous: bool,
    #[arg(long, value_enum, default_value_t = BandKind::Kde)]
    pub method: BandKind,
    /// Bootstrap resamples of each neighbor's samples.
    #[arg(long, default_value_t = 10)]
    pub reps_samples: usize,
    /// Bootstrap resamples of the neighbor set.
    #[arg(long, default_value_t = 10)]
    pub reps_neighbors: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum StudyKind {
    /// Mean error against samples per entry, with a power-law fit.
    Scaling,
    /// Dist-NN error next to a single entry's error.
    Denoising,
    /// Relative error of mean, median, standard deviation and value at risk.
    Quantities,
    /// Coverage of the oracle asymptotic band.
    Coverage,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = StudyKind::Scaling)]
    pub study: StudyKind,
    /// JSON study configuration; built-in defaults when absent. The
    /// resolved configuration is echoed in every output.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the number of trials.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Overrides the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the scaling table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Subcommand)]
pub enum VerifyCheck {
    /// Expected error of the empirical barycenter of uniform distributions.
    AppendixD {
        #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 20])]
        m: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [5, 20, 100])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
    /// Barycenter error over a grid of collection sizes and sample counts.
    Rate {
        #[arg(long, value_delimiter = ',', default_values_t = [8, 16, 32])]
        k: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [100, 200, 500, 1000, 2000])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Closed-form distances against enumeration of all matchings.
    BruteForce {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
    },
}

#[derive(Args)]
pub struct VerifyArgs {
    #[command(subcommand)]
    pub check: VerifyCheck,
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Impute(a) => commands::impute(a),
        Command::Tune(a) => commands::tune(a),
        Command::Bands(a) => commands::bands(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Verify(a) => commands::verify(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code())
        }
    }
}

pub type CliResult<T = ()> = std::result::Result<T, Failure>;
