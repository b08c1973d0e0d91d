//! Weighted prediction error dereverberation: per frequency bin, a delayed
//! multichannel linear predictor is fit by iteratively reweighted least
//! squares with the current power estimate as weight, and its prediction of
//! the late reverberation is subtracted.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{ComplexSpec, MultiWave, Stft};

const POWER_FLOOR: f64 = 1e-10;
const LOADING_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WpeConfig {
    pub taps: usize,
    pub delay: usize,
    pub iterations: usize,
    /// Added to the diagonal of the weighted correlation matrix, relative to
    /// its mean diagonal entry.
    pub diagonal_loading: f64,
    /// Process every channel on its own (the single-channel variant).
    #[serde(default)]
    pub per_channel: bool,
}

impl Default for WpeConfig {
    fn default() -> Self {
        Self {
            taps: 10,
            delay: 3,
            iterations: 3,
            diagonal_loading: 1e-10,
            per_channel: false,
        }
    }
}

impl WpeConfig {
    fn validate(&self) -> Result<()> {
        if self.taps == 0 || self.delay == 0 || self.iterations == 0 {
            return Err(Error::InvalidConfig(
                "WPE taps, delay and iterations must all be at least 1".into(),
            ));
        }
        if !(self.diagonal_loading >= 0.0) {
            return Err(Error::InvalidConfig("diagonal loading must be non-negative".into()));
        }
        Ok(())
    }
}

/// Dereverberated spectrogram plus, per bin, the log-power objective
/// `Σ_t ln λ_t` before the first and after every iteration.
#[derive(Debug, Clone)]
pub struct WpeOutput {
    pub spec: ComplexSpec,
    pub objective: Vec<Vec<f64>>,
}

/// Per-frame channel-mean power, floored at `POWER_FLOOR` times its maximum
/// (all ones for an all-zero bin).
fn frame_power(d: &[Vec<Complex64>]) -> Vec<f64> {
    let frames = d[0].len();
    let mut p: Vec<f64> = (0..frames)
        .map(|t| d.iter().map(|ch| ch[t].norm_sqr()).sum::<f64>() / d.len() as f64)
        .collect();
    let floor = POWER_FLOOR * p.iter().fold(0.0f64, |m, v| m.max(*v));
    if floor == 0.0 {
        p.iter_mut().for_each(|v| *v = 1.0);
    } else {
        p.iter_mut().for_each(|v| *v = v.max(floor));
    }
    p
}

fn power_objective(d: &[Vec<Complex64>]) -> f64 {
    frame_power(d).iter().map(|l| l.ln()).sum()
}

/// Run WPE on one bin. `x` holds one frame sequence per channel.
fn wpe_bin(x: &[Vec<Complex64>], cfg: &WpeConfig) -> Result<(Vec<Vec<Complex64>>, Vec<f64>)> {
    let chans = x.len();
    let frames = x[0].len();
    let dim = chans * cfg.taps;
    let mut d: Vec<Vec<Complex64>> = x.to_vec();
    let mut objective = vec![power_objective(&d)];
    let mut stacked = vec![Complex64::new(0.0, 0.0); dim];
    let fill = |t: usize, out: &mut [Complex64]| {
        for tau in 0..cfg.taps {
            let src = t as isize - (cfg.delay + tau) as isize;
            for c in 0..chans {
                out[tau * chans + c] = if src >= 0 {
                    x[c][src as usize]
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
        }
    };
    for _ in 0..cfg.iterations {
        let mut r = DMatrix::<Complex64>::zeros(dim, dim);
        let mut p = DMatrix::<Complex64>::zeros(dim, chans);
        let lambda = frame_power(&d);
        for (t, l) in lambda.iter().enumerate() {
            let w = 1.0 / l;
            fill(t, &mut stacked);
            for i in 0..dim {
                let yi = stacked[i] * w;
                if yi == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in i..dim {
                    r[(i, j)] += yi * stacked[j].conj();
                }
                for c in 0..chans {
                    p[(i, c)] += yi * x[c][t].conj();
                }
            }
        }
        for i in 0..dim {
            for j in 0..i {
                r[(i, j)] = r[(j, i)].conj();
            }
        }
        let mean_diag = (0..dim).map(|i| r[(i, i)].re).sum::<f64>() / dim as f64;
        let mut loading = cfg.diagonal_loading * mean_diag;
        let mut solved = None;
        for _ in 0..=LOADING_RETRIES {
            let mut a = r.clone();
            for i in 0..dim {
                a[(i, i)] += Complex64::new(loading, 0.0);
            }
            if let Some(chol) = a.cholesky() {
                let g = chol.solve(&p);
                if g.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
                    solved = Some(g);
                    break;
                }
            }
            loading = if loading > 0.0 {
                loading * 10.0
            } else {
                POWER_FLOOR
            };
        }
        let g = solved.ok_or(Error::Singular {
            retries: LOADING_RETRIES,
        })?;
        for t in 0..frames {
            fill(t, &mut stacked);
            let y = DVector::from_column_slice(&stacked);
            let pred = g.adjoint() * y;
            for c in 0..chans {
                d[c][t] = x[c][t] - pred[c];
            }
        }
        objective.push(power_objective(&d));
    }
    Ok((d, objective))
}

/// Dereverberate every bin of `spec`; the output has the input's shape.
pub fn wpe_dereverb(spec: &ComplexSpec, cfg: &WpeConfig) -> Result<ComplexSpec> {
    Ok(wpe_with_trace(spec, cfg)?.spec)
}

pub fn wpe_with_trace(spec: &ComplexSpec, cfg: &WpeConfig) -> Result<WpeOutput> {
    cfg.validate()?;
    if spec.frames <= cfg.delay + cfg.taps {
        return Err(Error::TooShort {
            samples: spec.frames,
            needed: cfg.delay + cfg.taps + 1,
        });
    }
    let groups: Vec<Vec<usize>> = if cfg.per_channel {
        (0..spec.channels).map(|c| vec![c]).collect()
    } else {
        vec![(0..spec.channels).collect()]
    };
    let mut out = spec.clone();
    let mut objective = Vec::with_capacity(spec.bins * groups.len());
    for k in 0..spec.bins {
        for group in &groups {
            let x: Vec<Vec<Complex64>> = group
                .iter()
                .map(|&c| (0..spec.frames).map(|t| spec.at(c, t, k)).collect())
                .collect();
            let (d, obj) = wpe_bin(&x, cfg)?;
            for (ci, &c) in group.iter().enumerate() {
                for t in 0..spec.frames {
                    let i = out.idx(c, t, k);
                    out.data[i] = d[ci][t];
                }
            }
            objective.push(obj);
        }
    }
    Ok(WpeOutput {
        spec: out,
        objective,
    })
}

/// Waveform-level WPE: edge-padded STFT, dereverberation, and inverse STFT
/// back to the input length for every channel.
pub fn wpe_wave(wave: &MultiWave, cfg: &WpeConfig, stft: &Stft) -> Result<MultiWave> {
    let spec = stft.stft_padded(wave)?;
    let out = wpe_dereverb(&spec, cfg)?;
    let channels = (0..out.channels)
        .map(|c| stft.istft_padded(&out, c, wave.len()))
        .collect::<Result<Vec<_>>>()?;
    MultiWave::new(channels, wave.sample_rate())
}
