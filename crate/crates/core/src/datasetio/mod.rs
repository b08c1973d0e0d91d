//! Binary tensor files, checkpoints, JSON-lines manifests and dataset
//! synthesis.
//!
//! A checkpoint is a directory:
//!
//! ```text
//! manifest.json        model config, train config, step, seed, stats
//! params/<name>.ntsr   one tensor per parameter
//! adam_m/<name>.ntsr   first moments (when saved with optimizer state)
//! adam_v/<name>.ntsr   second moments
//! ```

mod checkpoint;
mod manifest;
mod pipeline;
mod synth;
mod tensor;

pub use checkpoint::{
    load_checkpoint, read_checkpoint_manifest, save_checkpoint, Checkpoint, CheckpointManifest, CHECKPOINT_MANIFEST,
};
pub use manifest::{append_manifest, read_manifest, ManifestEntry, Split};
pub use pipeline::{build_example, build_examples, render_utterance, Featurizer, UttFeatures};
pub use synth::{
    dataset_stats, generate_corpus, load_examples, load_utterance, synth_dataset, SplitCounts, SynthOptions,
    SynthSummary, MANIFEST_FILE,
};
pub use tensor::{read_tensor, write_tensor, DType, Tensor, TensorData};
