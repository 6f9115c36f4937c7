mod commands;
mod record;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lfa::LfaError;

#[derive(Parser, Debug)]
#[command(name = "lfa", version, about = "Fit and evaluate linear maps between image embeddings and class prototypes")]
struct Cli {
    /// Scalar type used for all numerics.
    #[arg(long, global = true, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Supervised fit: Procrustes, β-interpolation, then refinement.
    Fit(FitArgs),
    /// Unsupervised fit from Sinkhorn pseudo-labels.
    FitUnsup(UnsupArgs),
    /// Score a fitted map on a labeled archive.
    Eval(EvalArgs),
    /// Cross-validate β over a grid and export the fold table.
    SweepBeta(SweepBetaArgs),
    /// Write a planted-map synthetic benchmark as archives.
    Synth(SynthArgs),
    /// Export the histogram of ground-truth prototype ranks.
    Hubness(HubnessArgs),
    /// Report the modality gap and export a PCA projection.
    Gap(GapArgs),
    /// Least-squares map between two prototype archives.
    ApproxPrompts(ApproxArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
#[serde(untagged)]
pub enum BetaChoice {
    #[serde(serialize_with = "serialize_auto")]
    Auto,
    Value(f64),
}

fn serialize_auto<S: serde::Serializer>(s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str("auto")
}

fn parse_beta(s: &str) -> Result<BetaChoice, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(BetaChoice::Auto);
    }
    s.parse::<f64>()
        .map(BetaChoice::Value)
        .map_err(|_| format!("expected `auto` or a number, got `{s}`"))
}

/// Refinement hyperparameters. Unset values come from the preset, then the library defaults.
#[derive(Args, Debug, Clone)]
pub struct RefineArgs {
    /// Named per-dataset settings, e.g. `few-shot/imagenet`.
    #[arg(long)]
    pub preset: Option<String>,
    /// arerank, contrastive, triplet or csls.
    #[arg(long)]
    pub loss: Option<String>,
    /// Hard negatives mined per sample.
    #[arg(long)]
    pub k: Option<usize>,
    /// Margin scale: the margin is (1 − cos) / s.
    #[arg(long)]
    pub s: Option<f64>,
    /// Refinement iterations.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Initial AdamW learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning rate at the end of the cosine schedule.
    #[arg(long)]
    pub lr_min: Option<f64>,
    /// Decoupled weight decay.
    #[arg(long)]
    pub wd: Option<f64>,
    /// Std of Gaussian input noise during refinement.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Input dropout probability during refinement.
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Also track the slowly-updated map W_tt.
    #[arg(long)]
    pub ema: bool,
    /// Mini-batch size; full batch when omitted.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Temperature of the cross-entropy losses.
    #[arg(long)]
    pub loss_tau: Option<f64>,
    /// Margin of the triplet loss.
    #[arg(long)]
    pub triplet_margin: Option<f64>,
    /// Seed for all randomness.
    #[arg(long, env = "LFA_SEED", default_value_t = 0)]
    pub seed: u64,
    /// How grouped rows (crops, frames) are combined: expand, mean or max.
    #[arg(long, default_value = "expand")]
    pub aggregate: String,
}

#[derive(Args, Debug, Clone)]
pub struct FoldArgs {
    /// Cross-validation folds.
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    /// Per-class fraction held out for validation.
    #[arg(long, default_value_t = 0.2)]
    pub val_frac: f64,
    /// Per-class fraction used for training.
    #[arg(long, default_value_t = 0.7)]
    pub train_frac: f64,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Labeled feature archive (`<base>.npy` + `<base>.json`).
    #[arg(long)]
    pub train: PathBuf,
    /// Prototype archive.
    #[arg(long)]
    pub prototypes: PathBuf,
    /// `auto` (cross-validated) or a value in [0, 1].
    #[arg(long, value_parser = parse_beta)]
    pub beta: Option<BetaChoice>,
    #[command(flatten)]
    pub refine: RefineArgs,
    #[command(flatten)]
    pub folds: FoldArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct UnsupArgs {
    /// Feature archive; labels, if present, are used only for reporting.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub prototypes: PathBuf,
    /// Assignment/refinement rounds.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Sinkhorn entropic regularization.
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    /// Maximum Sinkhorn sweeps.
    #[arg(long, default_value_t = 100)]
    pub sinkhorn_iters: usize,
    /// Stop Sinkhorn early once the column residual is at most this.
    #[arg(long)]
    pub sinkhorn_tol: Option<f64>,
    /// Interpolation toward the identity.
    #[arg(long, default_value_t = 0.9)]
    pub beta: f64,
    #[command(flatten)]
    pub refine: RefineArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Which {
    W,
    WTt,
    Average,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub prototypes: PathBuf,
    /// Map `W` (NPY).
    #[arg(long)]
    pub mapping: PathBuf,
    /// Map `W_tt` (NPY), required by `--which w-tt` and `--which average`.
    #[arg(long)]
    pub mapping_tt: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Which::W)]
    pub which: Which,
    /// Softmax temperature for `--probs`.
    #[arg(long, default_value_t = lfa::eval::DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, default_value = "expand")]
    pub aggregate: String,
    /// Write the report JSON here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the ground-truth rank histogram (CSV).
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    /// Write per-sample class probabilities (CSV).
    #[arg(long)]
    pub probs: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepBetaArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub prototypes: PathBuf,
    #[command(flatten)]
    pub refine: RefineArgs,
    #[command(flatten)]
    pub folds: FoldArgs,
    /// Fold table (CSV: beta, fold, val_acc).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Planted {
    Identity,
    Orthogonal,
    NearIdentity,
    Invertible,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long = "C", alias = "classes", default_value_t = 20)]
    pub classes: usize,
    #[arg(long = "d", alias = "dim", default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 16)]
    pub shots: usize,
    #[arg(long, default_value_t = 10)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, value_enum, default_value_t = Planted::Orthogonal)]
    pub planted: Planted,
    /// Perturbation size for `--planted near-identity`.
    #[arg(long, default_value_t = 0.1)]
    pub strength: f64,
    /// Omit labels from the training manifest.
    #[arg(long)]
    pub drop_labels: bool,
    /// Seed for all randomness.
    #[arg(long, env = "LFA_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct HubnessArgs {
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub prototypes: PathBuf,
    /// Map to apply; identity when omitted.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// Histogram CSV (rank, count).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GapArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub prototypes: PathBuf,
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    /// PCA coordinates of embeddings and matched prototypes (CSV).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ApproxArgs {
    /// Prototypes of the original prompts.
    #[arg(long)]
    pub source: PathBuf,
    /// Prototypes of the prompts to approximate.
    #[arg(long)]
    pub target: PathBuf,
    /// Output map (NPY).
    #[arg(long)]
    pub out: PathBuf,
}

fn dispatch<T: lfa::Real>(cli: &Cli) -> lfa::Result<serde_json::Value> {
    match &cli.command {
        Command::Fit(a) => commands::fit::<T>(a, cli.precision),
        Command::FitUnsup(a) => commands::fit_unsup::<T>(a, cli.precision),
        Command::Eval(a) => commands::eval::<T>(a),
        Command::SweepBeta(a) => commands::sweep_beta::<T>(a),
        Command::Synth(a) => commands::synth::<T>(a),
        Command::Hubness(a) => commands::hubness::<T>(a),
        Command::Gap(a) => commands::gap::<T>(a),
        Command::ApproxPrompts(a) => commands::approx_prompts::<T>(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.precision {
        Precision::F32 => dispatch::<f32>(&cli),
        Precision::F64 => dispatch::<f64>(&cli),
    };
    match outcome {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            // a closed pipe (e.g. `| head`) is not an error of the run
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            report_error(&e);
            ExitCode::FAILURE
        }
    }
}

fn report_error(e: &LfaError) {
    let body = serde_json::json!({ "error": e.name(), "message": e.to_string() });
    eprintln!("{body}");
}
