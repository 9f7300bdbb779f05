//! `gacredit`: ingest FRED extracts, fit, predict, nowcast, attribute,
//! stress-test and export figure data.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "gacredit", version, about = "Geometric-algebra linear attention for consumer credit cycles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Default, Clone)]
pub struct Common {
    /// Quarterly panel CSV (moments read from `<stem>.moments.csv` when present)
    #[arg(long, global = true)]
    pub panel: Option<PathBuf>,
    /// Model artifact
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Flat key = value config file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub lambda_qk: Option<f64>,
    #[arg(long, global = true)]
    pub lambda_v: Option<f64>,
    /// linear | mlp
    #[arg(long, global = true)]
    pub head: Option<String>,
    /// Rolling standardization window
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Repeatable START:END quarter range, e.g. 2007Q4:2010Q4
    #[arg(long = "crisis-window", global = true)]
    pub crisis_window: Vec<String>,
    /// Scenario CSV `quarter,variable,shock_sigma`
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Quarter for single-quarter reports, or `last`
    #[arg(long, global = true)]
    pub target: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build standardized panels from five FRED CSV extracts
    Ingest(IngestArgs),
    /// Train and write a model artifact
    Fit(FitArgs),
    /// Historical fit on the panel
    Predict,
    /// Monthly nowcasts against the quarterly model
    Nowcast(NowcastArgs),
    /// Attention, occlusion and variable attribution
    Attribute(AttributeArgs),
    /// Scenario shocks: direct recomputation and first-order deltas
    Stress,
    /// Figure data: fit, PCA, components, attention heatmap, regimes
    ExportFigures(ExportArgs),
    /// Built-in verification suites
    Selfcheck(SelfcheckArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Directory holding UNRATE.csv, PCE.csv, PSAVERT.csv, REVOLSL.csv, CORCACBS.csv
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub unrate: Option<PathBuf>,
    #[arg(long)]
    pub pce: Option<PathBuf>,
    #[arg(long)]
    pub psavert: Option<PathBuf>,
    #[arg(long)]
    pub revolsl: Option<PathBuf>,
    #[arg(long)]
    pub corcacbs: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Train even if the gradient check exceeds the gate
    #[arg(long)]
    pub skip_gradient_gate: bool,
}

#[derive(Args, Debug)]
pub struct NowcastArgs {
    /// Monthly panel CSV written by `ingest`
    #[arg(long)]
    pub monthly: PathBuf,
}

#[derive(Args, Debug)]
pub struct AttributeArgs {
    /// Report every admissible quarter instead of the target
    #[arg(long)]
    pub all: bool,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// Also write SVG renderings next to the CSVs
    #[arg(long)]
    pub svg: bool,
}

#[derive(Args, Debug)]
pub struct SelfcheckArgs {
    #[arg(long, hide = true)]
    pub inject_sign_error: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
