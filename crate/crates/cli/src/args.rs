use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use citeq_core::{QuantileGrid, Variant};

#[derive(Debug, Parser)]
#[command(name = "citeq", version, about = "Quantile prediction of long-term citation counts")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the quantile grid and write the model as JSON.
    Fit(FitArgs),
    /// Write monotonized predicted quantiles for every record.
    Predict(PredictArgs),
    /// Write calibration, group comparison and coverage heatmap tables.
    Evaluate(EvaluateArgs),
    /// Estimate the Pareto tail exponent and write the Hill scan.
    Tail(TailArgs),
    /// Write the Zenga curve of the outcome distribution.
    Zenga(ZengaArgs),
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
    /// Calibration of a normalized model on another cohort.
    Transfer(TransferArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    If,
    C1,
    Full,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::If => Variant::IfOnly,
            VariantArg::C1 => Variant::C1Only,
            VariantArg::Full => Variant::Full,
        }
    }
}

fn parse_grid(s: &str) -> Result<QuantileGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err("expected start:stop:step".into());
    }
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    QuantileGrid::range(num(parts[0])?, num(parts[1])?, num(parts[2])?).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "full")]
    pub variant: VariantArg,

    /// Offset added to c1 inside the logarithm.
    #[arg(long, default_value_t = 0.5, conflicts_with = "select_k0")]
    pub k0: f64,

    /// Choose k0 from these candidates by grouped calibration error.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub select_k0: Option<Vec<f64>>,

    /// Quantile grid as start:stop:step.
    #[arg(long, default_value = "0.5:0.99:0.01", value_parser = parse_grid)]
    pub grid: QuantileGrid,

    /// Divide c1, the impact factor and c_future by their cohort means.
    #[arg(long)]
    pub normalize: bool,

    /// With --normalize, leave the impact factor in raw units.
    #[arg(long, requires = "normalize")]
    pub keep_raw_if: bool,

    /// Smallest (IF bucket, c1) cell used in grouped calibration.
    #[arg(long, default_value_t = 50)]
    pub min_group_size: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Output model JSON.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Cohort label stored with normalization constants.
    #[arg(long)]
    pub label: Option<String>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV with one row per record and one column per grid point.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Directory receiving calibration.csv, groups.csv and heatmap.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Quantile used for the group comparison and the heatmap.
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, default_value_t = 50)]
    pub min_group_size: usize,
}

#[derive(Debug, Args)]
pub struct TailArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Directory receiving tail.json and hill_scan.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Choose the threshold by the AMSE proxy (the default).
    #[arg(long, conflicts_with = "k")]
    pub pstar_auto: bool,
    /// Fixed number of top order statistics.
    #[arg(long)]
    pub k: Option<usize>,
    /// Rescale outcomes to the reference covariate level of this model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Grid point whose coefficients define the rescaling.
    #[arg(long, default_value_t = 0.95, requires = "model")]
    pub adjust_p: f64,
}

#[derive(Debug, Args)]
pub struct ZengaArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    /// JSON generator settings; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Random seed (default 42).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Multiplies every generated c_future.
    #[arg(long)]
    pub scale_factor: Option<f64>,
    /// Tail exponent of the outcome law; sets b = 1 / alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub cohort_year: Option<i32>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// Model fitted with --normalize.
    #[arg(long)]
    pub model: PathBuf,
    /// Target cohort CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub label: Option<String>,
}
