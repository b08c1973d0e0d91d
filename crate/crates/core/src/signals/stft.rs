use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::MultiWave;
use crate::error::{Error, Result};

/// Framing parameters of the short-time Fourier transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub win_len: usize,
    pub fft_len: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            win_len: 1200,
            fft_len: 2048,
            hop: 300,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.win_len == 0 || self.fft_len == 0 {
            return Err(Error::InvalidConfig("STFT sizes must be positive".into()));
        }
        if self.hop > self.win_len || self.win_len > self.fft_len {
            return Err(Error::InvalidConfig(format!(
                "need hop <= win_len <= fft_len, got {} / {} / {}",
                self.hop, self.win_len, self.fft_len
            )));
        }
        Ok(())
    }

    /// Number of one-sided frequency bins.
    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn num_frames(&self, samples: usize) -> usize {
        if samples < self.win_len {
            0
        } else {
            (samples - self.win_len) / self.hop + 1
        }
    }

    /// Periodic Hann window of `win_len` samples.
    pub fn window(&self) -> Vec<f64> {
        let n = self.win_len as f64;
        (0..self.win_len)
            .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n).cos()))
            .collect()
    }

    /// Relative ripple of the steady-state squared-window overlap-add envelope.
    pub fn cola_ripple(&self) -> f64 {
        let w = self.window();
        let env: Vec<f64> = (0..self.hop)
            .map(|n| {
                (n..self.win_len)
                    .step_by(self.hop)
                    .map(|i| w[i] * w[i])
                    .sum::<f64>()
            })
            .collect();
        let max = env.iter().cloned().fold(f64::MIN, f64::max);
        let min = env.iter().cloned().fold(f64::MAX, f64::min);
        if max <= 0.0 {
            return f64::INFINITY;
        }
        (max - min) / max
    }

    /// Hz of one-sided bin `k`.
    pub fn bin_hz(&self, k: usize, sample_rate: u32) -> f64 {
        k as f64 * sample_rate as f64 / self.fft_len as f64
    }
}

/// Complex spectrogram laid out as `[channel][frame][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpec {
    pub data: Vec<Complex64>,
    pub channels: usize,
    pub frames: usize,
    pub bins: usize,
    pub config: StftConfig,
    pub sample_rate: u32,
}

impl ComplexSpec {
    pub fn zeros(channels: usize, frames: usize, config: StftConfig, sample_rate: u32) -> Self {
        let bins = config.bins();
        Self {
            data: vec![Complex64::new(0.0, 0.0); channels * frames * bins],
            channels,
            frames,
            bins,
            config,
            sample_rate,
        }
    }

    #[inline]
    pub fn idx(&self, c: usize, t: usize, k: usize) -> usize {
        (c * self.frames + t) * self.bins + k
    }

    #[inline]
    pub fn at(&self, c: usize, t: usize, k: usize) -> Complex64 {
        self.data[self.idx(c, t, k)]
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let len = self.frames * self.bins;
        &self.data[c * len..(c + 1) * len]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [Complex64] {
        let len = self.frames * self.bins;
        &mut self.data[c * len..(c + 1) * len]
    }

    /// Copy of a single channel as a one-channel spectrogram.
    pub fn select_channel(&self, c: usize) -> ComplexSpec {
        ComplexSpec {
            data: self.channel(c).to_vec(),
            channels: 1,
            frames: self.frames,
            bins: self.bins,
            config: self.config,
            sample_rate: self.sample_rate,
        }
    }

    /// Stack single-channel spectrograms of identical geometry.
    pub fn stack(parts: &[ComplexSpec]) -> Result<ComplexSpec> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Empty("no spectrograms to stack".into()))?;
        let mut out = ComplexSpec::zeros(0, first.frames, first.config, first.sample_rate);
        for p in parts {
            if p.frames != first.frames || p.bins != first.bins {
                return Err(Error::Shape("spectrogram geometry differs".into()));
            }
            out.data.extend_from_slice(&p.data);
            out.channels += p.channels;
        }
        Ok(out)
    }

    /// Energy of frame `t` of channel `c` in the time domain, recovered from
    /// the one-sided spectrum.
    pub fn frame_energy(&self, c: usize, t: usize) -> f64 {
        let row = &self.channel(c)[t * self.bins..(t + 1) * self.bins];
        let n = self.config.fft_len;
        let mut e = 0.0;
        for (k, v) in row.iter().enumerate() {
            let w = if k == 0 || (n % 2 == 0 && k == self.bins - 1) {
                1.0
            } else {
                2.0
            };
            e += w * v.norm_sqr();
        }
        e / n as f64
    }

    pub fn scale(&mut self, gain: Complex64) {
        for v in &mut self.data {
            *v *= gain;
        }
    }
}

/// Reusable forward/inverse transform for one configuration.
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            cfg,
            window: cfg.window(),
            forward: planner.plan_fft_forward(cfg.fft_len),
            inverse: planner.plan_fft_inverse(cfg.fft_len),
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    /// One-sided spectrogram of a single channel, written into `out`
    /// (`frames × bins`).
    fn analyze_into(&self, samples: &[f64], out: &mut [Complex64]) {
        let StftConfig {
            win_len,
            fft_len,
            hop,
        } = self.cfg;
        let bins = self.cfg.bins();
        let frames = self.cfg.num_frames(samples.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for t in 0..frames {
            let start = t * hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = if i < win_len {
                    Complex64::new(samples[start + i] * self.window[i], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            out[t * bins..(t + 1) * bins].copy_from_slice(&buf[..bins]);
        }
    }

    pub fn stft(&self, samples: &[f64], sample_rate: u32) -> Result<ComplexSpec> {
        if samples.len() < self.cfg.win_len {
            return Err(Error::TooShort {
                samples: samples.len(),
                needed: self.cfg.win_len,
            });
        }
        let frames = self.cfg.num_frames(samples.len());
        let mut spec = ComplexSpec::zeros(1, frames, self.cfg, sample_rate);
        self.analyze_into(samples, &mut spec.data);
        Ok(spec)
    }

    pub fn stft_multi(&self, wave: &MultiWave) -> Result<ComplexSpec> {
        if wave.len() < self.cfg.win_len {
            return Err(Error::TooShort {
                samples: wave.len(),
                needed: self.cfg.win_len,
            });
        }
        let frames = self.cfg.num_frames(wave.len());
        let mut spec = ComplexSpec::zeros(wave.num_channels(), frames, self.cfg, wave.sample_rate());
        for c in 0..wave.num_channels() {
            self.analyze_into(wave.channel(c), spec.channel_mut(c));
        }
        Ok(spec)
    }

    /// Weighted overlap-add inverse of channel `c`. Output length is
    /// `(frames - 1) * hop + win_len`.
    pub fn istft(&self, spec: &ComplexSpec, c: usize) -> Result<Vec<f64>> {
        if spec.config != self.cfg {
            return Err(Error::InvalidConfig(
                "spectrogram was produced with a different STFT config".into(),
            ));
        }
        let ripple = self.cfg.cola_ripple();
        if ripple > 1e-9 {
            return Err(Error::NonCola { ripple });
        }
        let StftConfig {
            win_len,
            fft_len,
            hop,
        } = self.cfg;
        let bins = spec.bins;
        if spec.frames == 0 {
            return Ok(Vec::new());
        }
        let len = (spec.frames - 1) * hop + win_len;
        let mut out = vec![0.0; len];
        let mut env = vec![0.0; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let ch = spec.channel(c);
        let norm = 1.0 / fft_len as f64;
        for t in 0..spec.frames {
            let row = &ch[t * bins..(t + 1) * bins];
            buf[..bins].copy_from_slice(row);
            // Hermitian extension; DC and Nyquist are forced real.
            buf[0].im = 0.0;
            if fft_len % 2 == 0 {
                buf[bins - 1].im = 0.0;
            }
            for k in bins..fft_len {
                buf[k] = buf[fft_len - k].conj();
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = t * hop;
            for i in 0..win_len {
                let w = self.window[i];
                out[start + i] += buf[i].re * norm * w;
                env[start + i] += w * w;
            }
        }
        for (o, e) in out.iter_mut().zip(&env) {
            *o = if *e > 1e-10 { *o / e } else { 0.0 };
        }
        Ok(out)
    }

    /// Zeros added in front of a signal by [`Stft::stft_padded`], so that every
    /// original sample is covered by the full set of overlapping frames.
    pub fn edge_pad(&self) -> usize {
        self.cfg.win_len - self.cfg.hop
    }

    /// Multichannel STFT of `wave` padded with [`Stft::edge_pad`] zeros at the
    /// start and at least as many at the end. Invert with
    /// [`Stft::istft_padded`] for waveform-level processing.
    pub fn stft_padded(&self, wave: &MultiWave) -> Result<ComplexSpec> {
        if wave.is_empty() {
            return Err(Error::TooShort {
                samples: 0,
                needed: 1,
            });
        }
        let pad = self.edge_pad();
        let hop = self.cfg.hop;
        let body = wave.len() + 2 * pad - self.cfg.win_len;
        let total = self.cfg.win_len + body.div_ceil(hop) * hop;
        let channels = wave
            .channels()
            .iter()
            .map(|ch| {
                let mut v = vec![0.0; total];
                v[pad..pad + ch.len()].copy_from_slice(ch);
                v
            })
            .collect();
        self.stft_multi(&MultiWave::new(channels, wave.sample_rate())?)
    }

    /// Inverse of [`Stft::stft_padded`]: channel `c`, trimmed to `len` samples.
    pub fn istft_padded(&self, spec: &ComplexSpec, c: usize, len: usize) -> Result<Vec<f64>> {
        let mut y = self.istft(spec, c)?;
        let pad = self.edge_pad();
        y.drain(..pad.min(y.len()));
        y.resize(len, 0.0);
        Ok(y)
    }
}

/// Single-channel STFT with a one-off plan.
pub fn stft(samples: &[f64], cfg: StftConfig, sample_rate: u32) -> Result<ComplexSpec> {
    Stft::new(cfg)?.stft(samples, sample_rate)
}

/// Inverse STFT of channel `c` with a one-off plan.
pub fn istft(spec: &ComplexSpec, c: usize) -> Result<Vec<f64>> {
    Stft::new(spec.config)?.istft(spec, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn padded_round_trip_covers_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..5000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let engine = Stft::new(StftConfig::default()).unwrap();
        let wave = MultiWave::mono(x.clone(), 16000).unwrap();
        let spec = engine.stft_padded(&wave).unwrap();
        let y = engine.istft_padded(&spec, 0, x.len()).unwrap();
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Naive DFT of one windowed, zero-padded frame.
    fn dft_frame(frame: &[f64], fft_len: usize) -> Vec<Complex64> {
        (0..fft_len / 2 + 1)
            .map(|k| {
                frame
                    .iter()
                    .enumerate()
                    .map(|(n, x)| {
                        Complex64::from_polar(*x, -2.0 * PI * (k * n) as f64 / fft_len as f64)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn frame_count_for_one_second() {
        let spec = stft(&vec![0.0; 48000], StftConfig::default(), 16000).unwrap();
        assert_eq!(spec.frames, 157);
        assert_eq!(spec.bins, 1025);
        assert!(spec.data.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn too_short_signal_is_rejected() {
        let err = stft(&vec![0.0; 1199], StftConfig::default(), 16000).unwrap_err();
        assert!(matches!(err, Error::TooShort { samples: 1199, needed: 1200 }));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = StftConfig {
            win_len: 400,
            fft_len: 256,
            hop: 100,
        };
        assert!(Stft::new(cfg).is_err());
    }

    #[test]
    fn matches_naive_dft() {
        let cfg = StftConfig::default();
        let x = noise(4000, 3);
        let spec = stft(&x, cfg, 16000).unwrap();
        let w = cfg.window();
        let t = 5;
        let frame: Vec<f64> = (0..cfg.win_len).map(|i| x[t * cfg.hop + i] * w[i]).collect();
        let reference = dft_frame(&frame, cfg.fft_len);
        for k in 0..spec.bins {
            assert!((spec.at(0, t, k) - reference[k]).norm() < 1e-9);
        }
    }

    #[test]
    fn bin_centred_sinusoid_concentrates_energy() {
        let cfg = StftConfig::default();
        let k0 = 128usize;
        // A whole number of periods per window places the tone on a
        // window-resolution bin; the fft grid is twice as fine.
        let x: Vec<f64> = (0..cfg.win_len)
            .map(|n| (2.0 * PI * k0 as f64 * n as f64 / cfg.fft_len as f64).cos())
            .collect();
        let spec = stft(&x, cfg, 16000).unwrap();
        let total = spec.frame_energy(0, 0);
        // Energy within the Hann main lobe around the tone.
        let lobe: f64 = (k0 - 4..=k0 + 4)
            .map(|k| 2.0 * spec.at(0, 0, k).norm_sqr())
            .sum::<f64>()
            / cfg.fft_len as f64;
        assert!(lobe / total > 0.99, "{}", lobe / total);
        let peak = (0..spec.bins)
            .max_by(|&a, &b| spec.at(0, 0, a).norm().total_cmp(&spec.at(0, 0, b).norm()))
            .unwrap();
        assert_eq!(peak, k0);
    }

    #[test]
    fn exact_bin_sinusoid_on_dft_grid() {
        // Rectangular-free check: with win_len == fft_len the tone sits on
        // the exact grid and the Hann spectrum has only k0 and its neighbours.
        let cfg = StftConfig {
            win_len: 2048,
            fft_len: 2048,
            hop: 512,
        };
        let k0 = 100;
        let x: Vec<f64> = (0..2048)
            .map(|n| (2.0 * PI * k0 as f64 * n as f64 / 2048.0).sin())
            .collect();
        let spec = stft(&x, cfg, 16000).unwrap();
        let total = spec.frame_energy(0, 0);
        let at = 2.0 * spec.at(0, 0, k0).norm_sqr() / 2048.0;
        let near: f64 = [k0 - 1, k0, k0 + 1]
            .iter()
            .map(|&k| 2.0 * spec.at(0, 0, k).norm_sqr() / 2048.0)
            .sum();
        assert!(near / total > 0.999999);
        assert!(at / total > 0.66);
    }

    #[test]
    fn linearity() {
        let cfg = StftConfig::default();
        let x = noise(6000, 1);
        let y = noise(6000, 2);
        let (a, b) = (0.7, -2.3);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let sx = stft(&x, cfg, 16000).unwrap();
        let sy = stft(&y, cfg, 16000).unwrap();
        let sm = stft(&mix, cfg, 16000).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..sm.data.len() {
            num += (sm.data[i] - (sx.data[i] * a + sy.data[i] * b)).norm_sqr();
            den += sm.data[i].norm_sqr();
        }
        assert!((num / den).sqrt() < 1e-12);
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = StftConfig::default();
        let x = noise(5000, 9);
        let spec = stft(&x, cfg, 16000).unwrap();
        let w = cfg.window();
        for t in 0..spec.frames {
            let e: f64 = (0..cfg.win_len)
                .map(|i| (x[t * cfg.hop + i] * w[i]).powi(2))
                .sum();
            assert!((spec.frame_energy(0, t) - e).abs() / e < 1e-9);
        }
    }

    #[test]
    fn round_trip_interior() {
        let cfg = StftConfig::default();
        let x = noise(16000, 5);
        let engine = Stft::new(cfg).unwrap();
        let y = engine.istft(&engine.stft(&x, 16000).unwrap(), 0).unwrap();
        let lo = cfg.win_len;
        let hi = y.len() - cfg.win_len;
        let num: f64 = (lo..hi).map(|i| (x[i] - y[i]).powi(2)).sum();
        let den: f64 = (lo..hi).map(|i| x[i].powi(2)).sum();
        assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn zero_spec_inverts_to_zero() {
        let spec = ComplexSpec::zeros(1, 10, StftConfig::default(), 16000);
        let y = istft(&spec, 0).unwrap();
        assert_eq!(y.len(), 9 * 300 + 1200);
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_frame_recovers_unwindowed_signal() {
        let cfg = StftConfig::default();
        let x: Vec<f64> = (0..cfg.win_len).map(|n| (0.05 * n as f64).sin()).collect();
        let spec = stft(&x, cfg, 16000).unwrap();
        assert_eq!(spec.frames, 1);
        let y = istft(&spec, 0).unwrap();
        let w = cfg.window();
        for i in 0..cfg.win_len {
            if w[i] > 1e-3 {
                assert!((y[i] - x[i]).abs() < 1e-9, "{i}");
            }
        }
    }

    #[test]
    fn non_cola_hop_is_rejected() {
        let cfg = StftConfig {
            win_len: 1200,
            fft_len: 2048,
            hop: 700,
        };
        let spec = ComplexSpec::zeros(1, 4, cfg, 16000);
        assert!(matches!(istft(&spec, 0), Err(Error::NonCola { .. })));
    }
}
