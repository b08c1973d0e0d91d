//! Multichannel spatial-audio workbench.
//!
//! The crate covers the full pipeline used to study joint dereverberation with
//! direction-of-arrival estimation or two-speaker separation:
//!
//! * [`signals`]: STFT, log-mel and phase features, normalization, frame
//!   stacking, and mel/Griffin-Lim reconstruction.
//! * [`roomsim`]: image-method room impulse responses and scene rendering.
//! * [`doa_classic`]: SRP-PHAT and MUSIC baselines on the 72-point grid.
//! * [`wpe`]: weighted-prediction-error dereverberation.
//! * [`nnet`]: the Gaussian-weighted transformer encoder with exact gradients.
//! * [`training`]: losses, Adam with warmup/linear decay, DOA voting, loops.
//! * [`metrics`]: SI-SDR, log-spectral distance and DOA accuracy metrics.
//! * [`datasetio`]: tensor files, checkpoints, manifests and dataset synthesis.

pub mod datasetio;
pub mod doa_classic;
pub mod error;
pub mod metrics;
pub mod nnet;
pub mod roomsim;
pub mod signals;
pub mod training;
pub mod wpe;

pub use error::{Error, Result};

pub use nnet::{Model, ModelConfig, Real};
pub use roomsim::{RoomScene, Task};
pub use signals::{ComplexSpec, FeatKind, FeatStats, FeatTensor, MultiWave, StftConfig};

/// Sample rate used throughout the workbench.
pub const SAMPLE_RATE: u32 = 16_000;
