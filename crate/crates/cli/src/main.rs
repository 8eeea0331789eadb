//! `vad`: synthetic data generation, meta-training, target adaptation with
//! scoring, and evaluation reports.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vad_core::eval::GroupBy;
use vad_core::meta::OuterOptimizer;
use vad_core::{Polarity, SamplerMode};

#[derive(Parser, Debug)]
#[command(
    name = "vad",
    version,
    about = "Scenario-adaptive few-shot video anomaly detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic multi-scenario dataset.
    GenData(GenDataArgs),
    /// Split a manifest (protocol i) and meta-train a predictor.
    Train(TrainArgs),
    /// Adapt to each test video and write frame scores.
    AdaptScore(AdaptScoreArgs),
    /// Frame-level metrics for a score file.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Generator spec JSON.
    #[arg(long, visible_alias = "config")]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the spec's dataset seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SamplerArg {
    Scenario,
    View,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use this split instead of computing a protocol i split.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerArg>,
    #[arg(long)]
    pub n_way: Option<usize>,
    #[arg(long)]
    pub k_shot: Option<usize>,
    #[arg(long)]
    pub val_size: Option<usize>,
    #[arg(long)]
    pub inner_lr: Option<f64>,
    #[arg(long)]
    pub inner_steps: Option<usize>,
    #[arg(long)]
    pub outer_lr: Option<f64>,
    #[arg(long)]
    pub meta_batch_tasks: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub second_order: Option<bool>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    /// Frame size as `HxW`.
    #[arg(long, value_parser = parse_size)]
    pub frame_size: Option<(usize, usize)>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub input_frames: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub recurrent: Option<bool>,
}

#[derive(Args, Debug)]
pub struct AdaptScoreArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Score only this split's test videos (default: every video).
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Adaptation config or a training config snapshot.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k_shot: Option<usize>,
    #[arg(long)]
    pub inner_lr: Option<f64>,
    #[arg(long)]
    pub inner_steps: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Score with the meta-trained model as is.
    #[arg(long)]
    pub no_adapt: bool,
    /// Also emit one score-curve plot per video.
    #[arg(long)]
    pub curves: bool,
    /// Pad unscored leading frames with 1.0.
    #[arg(long)]
    pub full_length: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PolarityArg {
    Normalcy,
    Anomaly,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GroupByArg {
    AnomalyType,
    Scenario,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub polarity: Option<PolarityArg>,
    #[arg(long, value_enum)]
    pub group_by: Option<GroupByArg>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got `{s}`"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((p(h)?, p(w)?))
}

impl From<SamplerArg> for SamplerMode {
    fn from(a: SamplerArg) -> Self {
        match a {
            SamplerArg::Scenario => SamplerMode::Scenario,
            SamplerArg::View => SamplerMode::View,
        }
    }
}

impl From<OptimizerArg> for OuterOptimizer {
    fn from(a: OptimizerArg) -> Self {
        match a {
            OptimizerArg::Sgd => OuterOptimizer::Sgd,
            OptimizerArg::Adam => OuterOptimizer::Adam,
        }
    }
}

impl From<PolarityArg> for Polarity {
    fn from(a: PolarityArg) -> Self {
        match a {
            PolarityArg::Normalcy => Polarity::Normalcy,
            PolarityArg::Anomaly => Polarity::Anomaly,
        }
    }
}

impl From<GroupByArg> for GroupBy {
    fn from(a: GroupByArg) -> Self {
        match a {
            GroupByArg::AnomalyType => GroupBy::AnomalyType,
            GroupByArg::Scenario => GroupBy::Scenario,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::AdaptScore(a) => commands::adapt_score(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.tag());
            ExitCode::FAILURE
        }
    }
}
