use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{ComplexSpec, MelFilterbank};
use crate::error::{Error, Result};

/// Floor added before taking the log of mel magnitudes.
pub const LOG_FLOOR: f64 = 1e-10;
/// Lower bound on per-dimension standard deviations.
pub const STD_FLOOR: f64 = 1e-5;
/// Mel bands per channel and number of low-frequency phase bins kept.
pub const MEL_BANDS: usize = 80;
pub const PHASE_BINS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatKind {
    Mag,
    Phase,
    Combined,
    Downsampled,
    Target,
}

/// Layout of a stacked feature row: `[frame-in-step][channel][feature]`,
/// feature index innermost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackLayout {
    pub frames_per_step: usize,
    pub channels: usize,
    pub feat_dims: usize,
}

impl StackLayout {
    pub fn row_len(&self) -> usize {
        self.frames_per_step * self.channels * self.feat_dims
    }

    #[inline]
    pub fn offset(&self, r: usize, c: usize, f: usize) -> usize {
        (r * self.channels + c) * self.feat_dims + f
    }
}

/// Real feature tensor, `[channel][frame][dim]`. Stacked tensors have a
/// single channel and carry their [`StackLayout`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatTensor {
    pub data: Vec<f64>,
    pub channels: usize,
    pub frames: usize,
    pub dims: usize,
    pub kind: FeatKind,
    pub layout: Option<StackLayout>,
}

impl FeatTensor {
    pub fn new(
        data: Vec<f64>,
        channels: usize,
        frames: usize,
        dims: usize,
        kind: FeatKind,
    ) -> Result<Self> {
        if data.len() != channels * frames * dims {
            return Err(Error::Shape(format!(
                "feature data has {} values, expected {channels}x{frames}x{dims}",
                data.len()
            )));
        }
        Ok(Self {
            data,
            channels,
            frames,
            dims,
            kind,
            layout: None,
        })
    }

    #[inline]
    pub fn idx(&self, c: usize, t: usize, d: usize) -> usize {
        (c * self.frames + t) * self.dims + d
    }

    #[inline]
    pub fn at(&self, c: usize, t: usize, d: usize) -> f64 {
        self.data[self.idx(c, t, d)]
    }

    pub fn frame(&self, c: usize, t: usize) -> &[f64] {
        let s = self.idx(c, t, 0);
        &self.data[s..s + self.dims]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.frames, self.dims]
    }
}

/// `ln(fb · |spec| + ε)` per channel and frame.
pub fn logmel(spec: &ComplexSpec, fb: &MelFilterbank) -> Result<FeatTensor> {
    if fb.bins != spec.bins {
        return Err(Error::Shape(format!(
            "filterbank has {} bins, spectrogram {}",
            fb.bins, spec.bins
        )));
    }
    let mut data = Vec::with_capacity(spec.channels * spec.frames * fb.n_mels);
    let mut mag = vec![0.0; spec.bins];
    let mut mel = vec![0.0; fb.n_mels];
    for c in 0..spec.channels {
        let ch = spec.channel(c);
        for t in 0..spec.frames {
            for (m, v) in mag.iter_mut().zip(&ch[t * spec.bins..(t + 1) * spec.bins]) {
                *m = v.norm();
            }
            fb.apply(&mag, &mut mel);
            data.extend(mel.iter().map(|v| (v + LOG_FLOOR).ln()));
        }
    }
    FeatTensor::new(data, spec.channels, spec.frames, fb.n_mels, FeatKind::Mag)
}

/// Wrap an angle into `[-π, π)`.
#[inline]
pub fn wrap_phase(a: f64) -> f64 {
    if a >= PI {
        a - 2.0 * PI
    } else if a < -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

/// Phase of the lowest [`PHASE_BINS`] one-sided bins.
pub fn phase_features(spec: &ComplexSpec) -> Result<FeatTensor> {
    if spec.bins < PHASE_BINS {
        return Err(Error::Shape(format!(
            "need at least {PHASE_BINS} bins for phase features, have {}",
            spec.bins
        )));
    }
    let mut data = Vec::with_capacity(spec.channels * spec.frames * PHASE_BINS);
    for c in 0..spec.channels {
        let ch = spec.channel(c);
        for t in 0..spec.frames {
            data.extend(
                ch[t * spec.bins..t * spec.bins + PHASE_BINS]
                    .iter()
                    .map(|v| wrap_phase(v.arg())),
            );
        }
    }
    FeatTensor::new(data, spec.channels, spec.frames, PHASE_BINS, FeatKind::Phase)
}

/// Concatenate magnitude and phase features along the last axis, magnitude first.
pub fn assemble_features(mag: &FeatTensor, phase: &FeatTensor) -> Result<FeatTensor> {
    if mag.channels != phase.channels || mag.frames != phase.frames {
        return Err(Error::Shape(format!(
            "mag {:?} and phase {:?} disagree on channels/frames",
            mag.shape(),
            phase.shape()
        )));
    }
    let dims = mag.dims + phase.dims;
    let mut data = Vec::with_capacity(mag.channels * mag.frames * dims);
    for c in 0..mag.channels {
        for t in 0..mag.frames {
            data.extend_from_slice(mag.frame(c, t));
            data.extend_from_slice(phase.frame(c, t));
        }
    }
    FeatTensor::new(data, mag.channels, mag.frames, dims, FeatKind::Combined)
}

/// Inverse of [`assemble_features`].
pub fn split_features(combined: &FeatTensor, mag_dims: usize) -> Result<(FeatTensor, FeatTensor)> {
    if mag_dims > combined.dims {
        return Err(Error::Shape("split point beyond feature width".into()));
    }
    let pdims = combined.dims - mag_dims;
    let mut mag = Vec::with_capacity(combined.channels * combined.frames * mag_dims);
    let mut phase = Vec::with_capacity(combined.channels * combined.frames * pdims);
    for c in 0..combined.channels {
        for t in 0..combined.frames {
            let f = combined.frame(c, t);
            mag.extend_from_slice(&f[..mag_dims]);
            phase.extend_from_slice(&f[mag_dims..]);
        }
    }
    Ok((
        FeatTensor::new(mag, combined.channels, combined.frames, mag_dims, FeatKind::Mag)?,
        FeatTensor::new(phase, combined.channels, combined.frames, pdims, FeatKind::Phase)?,
    ))
}

/// Full input feature pipeline for one multichannel spectrogram.
pub fn input_features(spec: &ComplexSpec, fb: &MelFilterbank) -> Result<FeatTensor> {
    assemble_features(&logmel(spec, fb)?, &phase_features(spec)?)
}

/// Per-dimension global statistics. Only the first `mag_dims` dimensions are
/// ever normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub mag_dims: usize,
}

pub fn compute_stats(train: &[FeatTensor], mag_dims: usize) -> Result<FeatStats> {
    let dims = train
        .first()
        .ok_or_else(|| Error::Empty("no training features".into()))?
        .dims;
    if train.iter().any(|f| f.dims != dims) {
        return Err(Error::Shape("training features differ in width".into()));
    }
    if mag_dims > dims {
        return Err(Error::Shape("mag_dims exceeds feature width".into()));
    }
    let mut count = 0usize;
    let mut sum = vec![0.0; dims];
    for f in train {
        for row in f.data.chunks_exact(dims) {
            count += 1;
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
        }
    }
    if count == 0 {
        return Err(Error::Empty("training features contain no frames".into()));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0; dims];
    for f in train {
        for row in f.data.chunks_exact(dims) {
            for ((s, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
    }
    let std = sq
        .iter()
        .map(|s| (s / count as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(FeatStats {
        mean,
        std,
        mag_dims,
    })
}

fn apply_stats(feat: &FeatTensor, stats: &FeatStats, forward: bool) -> Result<FeatTensor> {
    let mag_dims = match feat.kind {
        FeatKind::Combined => stats.mag_dims,
        FeatKind::Mag | FeatKind::Target => feat.dims,
        FeatKind::Phase => return Ok(feat.clone()),
        FeatKind::Downsampled => {
            return Err(Error::Shape(
                "normalize features before downsampling".into(),
            ))
        }
    };
    if mag_dims > stats.mag_dims || feat.dims > stats.mean.len() {
        return Err(Error::Shape(format!(
            "features have {} dims, stats cover {} magnitude dims",
            feat.dims, stats.mag_dims
        )));
    }
    let mut out = feat.clone();
    for row in out.data.chunks_exact_mut(feat.dims) {
        for d in 0..mag_dims {
            row[d] = if forward {
                (row[d] - stats.mean[d]) / stats.std[d]
            } else {
                row[d] * stats.std[d] + stats.mean[d]
            };
        }
    }
    Ok(out)
}

/// Z-score the magnitude dimensions; phase dimensions pass through.
pub fn normalize(feat: &FeatTensor, stats: &FeatStats) -> Result<FeatTensor> {
    apply_stats(feat, stats, true)
}

pub fn denormalize(feat: &FeatTensor, stats: &FeatStats) -> Result<FeatTensor> {
    apply_stats(feat, stats, false)
}

/// Stack `dr` neighbouring frames of all channels into one super-frame.
/// Trailing frames that do not fill a super-frame are dropped.
pub fn downsample(feat: &FeatTensor, dr: usize) -> Result<FeatTensor> {
    if dr == 0 {
        return Err(Error::InvalidConfig("downsample rate must be positive".into()));
    }
    if feat.frames < dr {
        return Err(Error::TooShort {
            samples: feat.frames,
            needed: dr,
        });
    }
    let layout = StackLayout {
        frames_per_step: dr,
        channels: feat.channels,
        feat_dims: feat.dims,
    };
    let steps = feat.frames / dr;
    let row = layout.row_len();
    let mut data = vec![0.0; steps * row];
    for s in 0..steps {
        for r in 0..dr {
            for c in 0..feat.channels {
                let dst = s * row + layout.offset(r, c, 0);
                data[dst..dst + feat.dims].copy_from_slice(feat.frame(c, s * dr + r));
            }
        }
    }
    let mut out = FeatTensor::new(data, 1, steps, row, FeatKind::Downsampled)?;
    out.layout = Some(layout);
    Ok(out)
}

/// Undo [`downsample`]: expand `[steps × row]` back to `[C × steps·dr × F]`.
pub fn upsample(stacked: &FeatTensor, layout: StackLayout, kind: FeatKind) -> Result<FeatTensor> {
    if stacked.channels != 1 || stacked.dims != layout.row_len() {
        return Err(Error::Shape(format!(
            "stacked tensor {:?} does not match layout {:?}",
            stacked.shape(),
            layout
        )));
    }
    let frames = stacked.frames * layout.frames_per_step;
    let mut data = vec![0.0; layout.channels * frames * layout.feat_dims];
    for s in 0..stacked.frames {
        let src_row = stacked.frame(0, s);
        for r in 0..layout.frames_per_step {
            for c in 0..layout.channels {
                let t = s * layout.frames_per_step + r;
                let dst = (c * frames + t) * layout.feat_dims;
                let src = layout.offset(r, c, 0);
                data[dst..dst + layout.feat_dims]
                    .copy_from_slice(&src_row[src..src + layout.feat_dims]);
            }
        }
    }
    FeatTensor::new(data, layout.channels, frames, layout.feat_dims, kind)
}
