//! Deterministic feature pipeline: STFT, log-mel and phase features,
//! normalization, super-frame stacking and reconstruction.

mod features;
mod mel;
mod recon;
mod stft;
mod synth;
mod wave;

pub use features::{
    assemble_features, compute_stats, denormalize, downsample, input_features, logmel, normalize,
    phase_features, split_features, upsample, wrap_phase, FeatKind, FeatStats, FeatTensor,
    StackLayout, LOG_FLOOR, MEL_BANDS, PHASE_BINS, STD_FLOOR,
};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, MelFilterbank};
pub use recon::{exp_logmel, griffin_lim, mel_to_linear, GriffinLim, MelInverse};
pub use stft::{istft, stft, ComplexSpec, Stft, StftConfig};
pub use synth::speechlike;
pub use wave::{MultiWave, WavEncoding};
