//! Waveform reconstruction from mel magnitudes: a clipped pseudo-inverse of
//! the filterbank followed by Griffin-Lim phase recovery.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{ComplexSpec, FeatKind, FeatTensor, MelFilterbank, Stft, LOG_FLOOR};
use crate::error::{Error, Result};

/// Pseudo-inverse of a mel filterbank.
#[derive(Debug, Clone)]
pub struct MelInverse {
    /// `bins × n_mels`, row-major.
    pinv: Vec<f64>,
    n_mels: usize,
    bins: usize,
}

impl MelInverse {
    pub fn new(fb: &MelFilterbank) -> Result<Self> {
        let a = DMatrix::from_row_slice(fb.n_mels, fb.bins, &fb.weights);
        let gram = &a * a.transpose();
        let inv = gram
            .cholesky()
            .ok_or_else(|| Error::InvalidConfig("mel filterbank Gram matrix is singular".into()))?
            .inverse();
        let p = a.transpose() * inv;
        let mut pinv = Vec::with_capacity(fb.bins * fb.n_mels);
        for r in 0..fb.bins {
            for c in 0..fb.n_mels {
                pinv.push(p[(r, c)]);
            }
        }
        Ok(Self {
            pinv,
            n_mels: fb.n_mels,
            bins: fb.bins,
        })
    }

    /// Least-norm linear magnitude frame for one mel frame, clipped at zero.
    pub fn invert_frame(&self, mel: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate().take(self.bins) {
            let row = &self.pinv[k * self.n_mels..(k + 1) * self.n_mels];
            let v: f64 = row.iter().zip(mel).map(|(p, m)| p * m).sum();
            *o = v.max(0.0);
        }
    }

    /// Map linear-domain mel magnitudes `[C × T × n_mels]` to `[C × T × bins]`.
    pub fn mel_to_linear(&self, mel: &FeatTensor) -> Result<FeatTensor> {
        if mel.dims != self.n_mels {
            return Err(Error::Shape(format!(
                "expected {} mel bands, got {}",
                self.n_mels, mel.dims
            )));
        }
        let mut data = vec![0.0; mel.channels * mel.frames * self.bins];
        for (src, dst) in mel.data.chunks_exact(self.n_mels).zip(data.chunks_exact_mut(self.bins)) {
            self.invert_frame(src, dst);
        }
        FeatTensor::new(data, mel.channels, mel.frames, self.bins, FeatKind::Mag)
    }
}

pub fn mel_to_linear(mel: &FeatTensor, fb: &MelFilterbank) -> Result<FeatTensor> {
    MelInverse::new(fb)?.mel_to_linear(mel)
}

/// Undo the log of a log-mel tensor, removing the floor.
pub fn exp_logmel(logmel: &FeatTensor) -> FeatTensor {
    let mut out = logmel.clone();
    for v in out.data.iter_mut() {
        *v = (v.exp() - LOG_FLOOR).max(0.0);
    }
    out
}

/// Griffin-Lim output plus the spectral convergence after each iteration,
/// `‖|STFT(x_i)| − S‖ / ‖S‖`.
#[derive(Debug, Clone)]
pub struct GriffinLim {
    pub samples: Vec<f64>,
    pub convergence: Vec<f64>,
}

/// Recover a waveform whose STFT magnitude approximates channel `c` of `mag`
/// (`[C × T × bins]`). Phase starts at zero, so results are deterministic.
pub fn griffin_lim(
    mag: &FeatTensor,
    c: usize,
    stft: &Stft,
    sample_rate: u32,
    iters: usize,
) -> Result<GriffinLim> {
    let cfg = *stft.config();
    if mag.dims != cfg.bins() {
        return Err(Error::Shape(format!(
            "magnitude has {} bins, STFT expects {}",
            mag.dims,
            cfg.bins()
        )));
    }
    let frames = mag.frames;
    let target = &mag.data[c * frames * mag.dims..(c + 1) * frames * mag.dims];
    // Full-spectrum weights of the one-sided bins: interior bins appear twice.
    let bins = mag.dims;
    let weight = |i: usize| {
        let k = i % bins;
        if k == 0 || (cfg.fft_len % 2 == 0 && k == bins - 1) {
            1.0
        } else {
            2.0
        }
    };
    let target_norm = target
        .iter()
        .enumerate()
        .map(|(i, v)| weight(i) * v * v)
        .sum::<f64>()
        .sqrt();
    let mut spec = ComplexSpec::zeros(1, frames, cfg, sample_rate);
    for (s, m) in spec.data.iter_mut().zip(target) {
        *s = Complex64::new(*m, 0.0);
    }
    let mut samples = stft.istft(&spec, 0)?;
    let mut convergence = Vec::with_capacity(iters);
    for _ in 0..iters {
        let rebuilt = stft.stft(&samples, sample_rate)?;
        let mut err = 0.0;
        for (i, ((s, r), m)) in spec.data.iter_mut().zip(&rebuilt.data).zip(target).enumerate() {
            let n = r.norm();
            err += weight(i) * (n - m) * (n - m);
            *s = if n > 0.0 { r * (*m / n) } else { Complex64::new(*m, 0.0) };
        }
        convergence.push(if target_norm > 0.0 {
            err.sqrt() / target_norm
        } else {
            0.0
        });
        samples = stft.istft(&spec, 0)?;
    }
    Ok(GriffinLim {
        samples,
        convergence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{speechlike, StftConfig};

    #[test]
    fn pseudo_inverse_recovers_smooth_in_band_spectra() {
        let fb = MelFilterbank::standard(16000).unwrap();
        let inv = MelInverse::new(&fb).unwrap();
        // Smooth, slowly varying positive spectrum inside the band.
        let bins = fb.bins;
        let hz = |k: usize| k as f64 * 16000.0 / 2048.0;
        let m: Vec<f64> = (0..bins)
            .map(|k| {
                let f = hz(k);
                if f > 80.0 && f < 7000.0 {
                    1.0 + 0.5 * (f / 1500.0).sin()
                } else {
                    0.0
                }
            })
            .collect();
        let mut mel = vec![0.0; 80];
        fb.apply(&m, &mut mel);
        let mut back = vec![0.0; bins];
        inv.invert_frame(&mel, &mut back);
        // residual in the mel domain is (near) zero
        let mut mel2 = vec![0.0; 80];
        fb.apply(&back, &mut mel2);
        let res: f64 = mel.iter().zip(&mel2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = mel.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(res / norm < 1e-3, "{}", res / norm);
        // and the linear spectrum is close inside the band, away from the edges
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..bins {
            if hz(k) > 300.0 && hz(k) < 6500.0 {
                num += (back[k] - m[k]).powi(2);
                den += m[k].powi(2);
            }
        }
        assert!((num / den).sqrt() < 0.1, "{}", (num / den).sqrt());
    }

    #[test]
    fn zero_magnitude_gives_silence() {
        let stft = Stft::new(StftConfig::default()).unwrap();
        let mag = FeatTensor::new(vec![0.0; 10 * 1025], 1, 10, 1025, FeatKind::Mag).unwrap();
        let gl = griffin_lim(&mag, 0, &stft, 16000, 5).unwrap();
        assert!(gl.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn convergence_is_monotone() {
        let stft = Stft::new(StftConfig::default()).unwrap();
        let x = speechlike(11, 1.0, 16000);
        let spec = stft.stft(&x, 16000).unwrap();
        let mag = FeatTensor::new(
            spec.data.iter().map(|v| v.norm()).collect(),
            1,
            spec.frames,
            spec.bins,
            FeatKind::Mag,
        )
        .unwrap();
        let gl = griffin_lim(&mag, 0, &stft, 16000, 30).unwrap();
        assert!(gl.samples.iter().all(|v| v.is_finite()));
        for w in gl.convergence.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
        assert!(gl.convergence.last().unwrap() < &gl.convergence[0]);
    }
}
