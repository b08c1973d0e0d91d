use crate::error::{Error, Result};
use crate::nnet::Real;
use crate::roomsim::{render_scene, Rendered, RoomScene, Task};
use crate::signals::{
    downsample, input_features, logmel, normalize, FeatKind, FeatStats, FeatTensor, MelFilterbank, MultiWave,
    Stft, StftConfig, MEL_BANDS,
};
use crate::training::Example;

/// STFT plus mel filterbank: everything needed to turn waves into model
/// features and targets.
pub struct Featurizer {
    pub stft: Stft,
    pub fb: MelFilterbank,
}

impl Featurizer {
    pub fn new(cfg: StftConfig, sample_rate: u32) -> Result<Self> {
        Ok(Self {
            stft: Stft::new(cfg)?,
            fb: MelFilterbank::standard(sample_rate)?,
        })
    }

    pub fn standard() -> Result<Self> {
        Self::new(StftConfig::default(), crate::SAMPLE_RATE)
    }

    /// Log-mel plus phase input features, `[C × T × 160]`.
    pub fn inputs(&self, wave: &MultiWave) -> Result<FeatTensor> {
        input_features(&self.stft.stft_multi(wave)?, &self.fb)
    }

    /// Log-mel target, `[C × T × 80]`.
    pub fn target(&self, wave: &MultiWave) -> Result<FeatTensor> {
        let mut t = logmel(&self.stft.stft_multi(wave)?, &self.fb)?;
        t.kind = FeatKind::Target;
        Ok(t)
    }
}

/// Unnormalized features of one rendered utterance. `targets[k]` belongs to
/// source `k` (0 = target speaker at the scene's source angle).
#[derive(Debug, Clone, PartialEq)]
pub struct UttFeatures {
    pub id: String,
    pub task: Task,
    pub input: FeatTensor,
    pub targets: Vec<FeatTensor>,
    pub class: Option<usize>,
}

/// Render `sources` in `scene` and featurize mixture and clean references.
pub fn render_utterance(
    id: impl Into<String>,
    sources: &[Vec<f64>],
    scene: &RoomScene,
    feat: &Featurizer,
) -> Result<(Rendered, UttFeatures)> {
    let rendered = render_scene(sources, scene, crate::SAMPLE_RATE)?;
    let input = feat.inputs(&rendered.mixture)?;
    let targets = rendered
        .clean
        .iter()
        .map(|c| feat.target(c))
        .collect::<Result<Vec<_>>>()?;
    let utt = UttFeatures {
        id: id.into(),
        task: scene.task,
        input,
        targets,
        class: (scene.task == Task::Doa).then(|| scene.doa_class()),
    };
    Ok((rendered, utt))
}

fn stacked<T: Real>(feat: &FeatTensor, stats: &FeatStats, dr: usize) -> Result<(usize, Vec<T>)> {
    let d = downsample(&normalize(feat, stats)?, dr)?;
    Ok((d.frames, d.data.iter().map(|v| T::cast(*v)).collect()))
}

/// Normalize with the training statistics, stack `dr` frames per step and
/// convert to model examples.
pub fn build_example<T: Real>(utt: &UttFeatures, stats: &FeatStats, dr: usize) -> Result<Example<T>> {
    if stats.mag_dims != MEL_BANDS {
        return Err(Error::Shape(format!(
            "statistics normalize {} dims, features have {MEL_BANDS} mel bands",
            stats.mag_dims
        )));
    }
    let (frames, input) = stacked(&utt.input, stats, dr)?;
    let mut targets = Vec::with_capacity(utt.targets.len());
    for t in &utt.targets {
        if t.frames != utt.input.frames {
            return Err(Error::Shape(format!(
                "{}: target has {} frames, input {}",
                utt.id, t.frames, utt.input.frames
            )));
        }
        targets.push(stacked::<T>(t, stats, dr)?.1);
    }
    let needed = utt.task.num_sources();
    if targets.len() < needed {
        return Err(Error::Shape(format!("{}: {needed} target(s) needed, found {}", utt.id, targets.len())));
    }
    let mut targets = targets.into_iter();
    let mag0 = targets.next().expect("checked");
    let mag1 = if utt.task == Task::Separation { targets.next() } else { None };
    Ok(Example {
        id: utt.id.clone(),
        frames,
        input,
        mag0,
        mag1,
        class: utt.class,
    })
}

pub fn build_examples<T: Real>(utts: &[UttFeatures], stats: &FeatStats, dr: usize) -> Result<Vec<Example<T>>> {
    utts.iter().map(|u| build_example(u, stats, dr)).collect()
}
