use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "reverbnet", version, about = "Multichannel dereverberation, DOA and separation workbench")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate image-method RIRs for one scene and store them as tensors.
    SimulateRir(SimulateRirArgs),
    /// Render a dataset from a wav corpus into wavs, tensors and a manifest.
    SynthDataset(SynthArgs),
    /// Compute training-set normalization statistics, or features of one wav.
    Featurize(FeaturizeArgs),
    /// Train a model on a synthesized dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a manifest split.
    Eval(EvalArgs),
    /// DOA estimation with a classic baseline or a trained model.
    Doa(DoaArgs),
    /// Weighted-prediction-error dereverberation of a wav file.
    Wpe(WpeArgs),
    /// Log-mel features back to audio with Griffin-Lim.
    Reconstruct(ReconstructArgs),
    /// Dump spectrograms or loss curves as CSV for external plotting.
    PlotData(PlotDataArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelPreset {
    Tiny,
    Small,
    Full,
    FullDense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    SrpPhat,
    Music,
    Neural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitArg {
    Tr,
    Dt,
    Et,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    Spectrogram,
    LossCurve,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateRirArgs {
    /// JSON file with default values for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Task: 1 (single speaker) or 2 (target at 0° plus interferer).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub task: u8,
    /// Target azimuth in degrees.
    #[arg(long, default_value_t = 0.0)]
    pub angle: f64,
    /// Interferer azimuth in degrees (task 2).
    #[arg(long)]
    pub interferer_angle: Option<f64>,
    /// Reverberation time in seconds.
    #[arg(long, default_value_t = 0.6)]
    pub t60: f64,
    /// Disable wall reflections.
    #[arg(long, default_value_t = false)]
    pub anechoic: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Directory of mono 16 kHz wav files.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output directory (receives manifest.jsonl, wav/ and feat/).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub task: u8,
    #[arg(long, default_value_t = 8)]
    pub tr: usize,
    #[arg(long, default_value_t = 2)]
    pub dt: usize,
    #[arg(long, default_value_t = 2)]
    pub et: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for rendering.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// First write this many synthetic speech-like wavs into the corpus dir.
    #[arg(long)]
    pub generate_corpus: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FeaturizeArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Dataset manifest; writes training-split statistics.
    #[arg(long, conflicts_with = "wav")]
    pub manifest: Option<PathBuf>,
    /// Single multichannel wav; writes its [C × T × 160] feature tensor.
    #[arg(long)]
    pub wav: Option<PathBuf>,
    /// Output path (default: stats.json next to the manifest).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Checkpoint and loss-curve directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub task: u8,
    #[arg(long, default_value_t = 75_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    /// Peak learning rate.
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    /// Fraction of steps used for linear warmup.
    #[arg(long, default_value_t = 0.01)]
    pub warmup_frac: f64,
    #[arg(long, value_enum, default_value_t = ModelPreset::Full)]
    pub model: ModelPreset,
    /// Initial Gaussian attention width σ.
    #[arg(long, default_value_t = 10.0)]
    pub sigma_init: f64,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    /// Save a checkpoint every N steps (0 = only the final one).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// Continue from this checkpoint directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Et)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Report path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DoaArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::SrpPhat)]
    pub method: MethodArg,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Et)]
    pub split: SplitArg,
    /// Checkpoint directory (neural method).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Candidates kept per utterance.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Analysis band for the classic methods, Hz.
    #[arg(long, default_value_t = 300.0)]
    pub band_lo: f64,
    #[arg(long, default_value_t = 3500.0)]
    pub band_hi: f64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct WpeArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Prediction filter length in frames.
    #[arg(long, default_value_t = 10)]
    pub taps: usize,
    /// Prediction delay in frames.
    #[arg(long, default_value_t = 3)]
    pub delay: usize,
    #[arg(long, default_value_t = 3)]
    pub iters: usize,
    /// Use only the first N channels (default: all).
    #[arg(long)]
    pub channels: Option<usize>,
    /// Dereverberate every channel independently.
    #[arg(long, default_value_t = false)]
    pub per_channel: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReconstructArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Log-mel ([C × T × 80]) or input-feature ([C × T × 160]) tensor.
    #[arg(long, conflicts_with = "wav")]
    pub features: Option<PathBuf>,
    /// Compute the log-mel of this wav and resynthesize it.
    #[arg(long)]
    pub wav: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    #[arg(long, default_value_t = 60)]
    pub iters: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PlotDataArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PlotKind::Spectrogram)]
    pub kind: PlotKind,
    /// Wav file (spectrogram) or loss.csv / training directory (loss curve).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
