use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "otod",
    version,
    about = "Optimal-transport OOD scoring and benchmark harness"
)]
pub struct Cli {
    /// Worker threads for per-sample scoring (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a manifest bundle and print the validation report as JSON.
    Validate(ValidateArgs),
    /// Score every split with one scorer and write report.json / report.md.
    Eval(EvalArgs),
    /// Run OTOD on feature, feature+logit and full inputs.
    Ablate(AblateArgs),
    /// Evaluate OTOD over a grid of temperatures.
    SweepTemp(SweepTempArgs),
    /// Gaussian mean-discrepancy sweep of the feature-part score.
    Simulate(SimulateArgs),
    /// Write a seeded synthetic bundle.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Otod,
    Msp,
    Ebo,
    Gen,
    Mds,
    Klm,
}

/// Benchmark presets for the OTOD temperature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// T = 10
    Cifar10,
    /// T = 3
    Cifar100,
}

impl Preset {
    pub fn temperature(self) -> f64 {
        match self {
            Preset::Cifar10 => 10.0,
            Preset::Cifar100 => 3.0,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OtodArgs {
    /// Fusion weights for feature, logit and probability parts [default: 1/3 each].
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub alpha: Option<Vec<f64>>,

    /// Softmax temperature (OTOD, EBO).
    #[arg(long)]
    pub temp: Option<f64>,

    /// Temperature preset; ignored when --temp is given.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    pub manifest: PathBuf,

    #[arg(long, value_enum)]
    pub scorer: ScorerKind,

    #[command(flatten)]
    pub otod: OtodArgs,

    /// GEN exponent.
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,

    /// GEN top-M [default: min(100, K)].
    #[arg(long)]
    pub top_m: Option<usize>,

    /// MDS/KLM covariance regularizer [default: 1e-6 * trace / d].
    #[arg(long)]
    pub epsilon: Option<f64>,

    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    pub manifest: PathBuf,

    #[arg(long)]
    pub temp: Option<f64>,

    #[arg(long, value_enum)]
    pub preset: Option<Preset>,

    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepTempArgs {
    pub manifest: PathBuf,

    /// Temperatures to evaluate, in output order.
    #[arg(long, value_delimiter = ',', required = true)]
    pub temps: Vec<f64>,

    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub alpha: Option<Vec<f64>>,

    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub d: Option<usize>,

    /// Samples per side at each shift.
    #[arg(long)]
    pub n: Option<usize>,

    /// Shift grid; must start at 0 and ascend.
    #[arg(long, value_delimiter = ',')]
    pub shifts: Option<Vec<f64>>,

    /// ID mean: one value (broadcast) or d values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub mu: Option<Vec<f64>>,

    /// Covariance is `scale * I`.
    #[arg(long)]
    pub sigma_scale: Option<f64>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 16)]
    pub d: usize,

    #[arg(long, default_value_t = 4)]
    pub k: usize,

    #[arg(long, default_value_t = 50)]
    pub n_train_per_class: usize,

    #[arg(long, default_value_t = 200)]
    pub n_test: usize,

    #[arg(long, default_value_t = 200)]
    pub n_ood: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub out: PathBuf,
}
