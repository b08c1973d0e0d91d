use crate::error::{Error, Result};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank, one row per mel band over the one-sided bins.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub weights: Vec<f64>,
    pub n_mels: usize,
    pub bins: usize,
    /// Band centre frequencies in Hz.
    pub centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.bins..(m + 1) * self.bins]
    }

    /// `fb · x` for a single magnitude frame of `bins` values.
    pub fn apply(&self, frame: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate().take(self.n_mels) {
            *o = self
                .row(m)
                .iter()
                .zip(frame)
                .map(|(w, x)| w * x)
                .sum();
        }
    }

    /// The default 80-band filterbank over 80–7000 Hz.
    pub fn standard(sample_rate: u32) -> Result<Self> {
        mel_filterbank(80, 80.0, 7000.0, 2048, sample_rate)
    }
}

/// HTK-scale triangular filters with peaks normalized to exactly 1.
pub fn mel_filterbank(
    n_mels: usize,
    f_lo: f64,
    f_hi: f64,
    fft_len: usize,
    sample_rate: u32,
) -> Result<MelFilterbank> {
    let nyquist = sample_rate as f64 / 2.0;
    if n_mels == 0 || !(f_lo >= 0.0 && f_lo < f_hi && f_hi <= nyquist) {
        return Err(Error::InvalidConfig(format!(
            "invalid mel band edges {f_lo}..{f_hi} Hz for sample rate {sample_rate}"
        )));
    }
    let bins = fft_len / 2 + 1;
    let (m_lo, m_hi) = (hz_to_mel(f_lo), hz_to_mel(f_hi));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = |k: usize| k as f64 * sample_rate as f64 / fft_len as f64;
    let mut weights = vec![0.0; n_mels * bins];
    for m in 0..n_mels {
        let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut weights[m * bins..(m + 1) * bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = bin_hz(k);
            *w = if f > lo && f <= c {
                (f - lo) / (c - lo)
            } else if f > c && f < hi {
                (hi - f) / (hi - c)
            } else {
                0.0
            };
        }
        let peak = row.iter().cloned().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "mel band {m} covers no FFT bin; use fewer bands or a longer FFT"
            )));
        }
        for w in row.iter_mut() {
            *w /= peak;
        }
    }
    Ok(MelFilterbank {
        weights,
        n_mels,
        bins,
        centers_hz: edges[1..=n_mels].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_reference_points() {
        // 2595 * log10(1 + 80/700) and 2595 * log10(11)
        assert!((hz_to_mel(80.0) - 121.956_080_144_8).abs() < 1e-9, "{}", hz_to_mel(80.0));
        assert!((hz_to_mel(7000.0) - 2702.414_017_985_6).abs() < 1e-9, "{}", hz_to_mel(7000.0));
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn rows_are_peak_normalized_contiguous_triangles() {
        let fb = MelFilterbank::standard(16000).unwrap();
        assert_eq!((fb.n_mels, fb.bins), (80, 1025));
        for m in 0..fb.n_mels {
            let row = fb.row(m);
            assert!(row.iter().all(|w| *w >= 0.0));
            assert_eq!(row.iter().cloned().fold(0.0, f64::max), 1.0);
            let support: Vec<usize> = (0..fb.bins).filter(|&k| row[k] > 0.0).collect();
            let (first, last) = (support[0], *support.last().unwrap());
            assert_eq!(support.len(), last - first + 1, "row {m} not contiguous");
            // unimodal: rises then falls
            let peak = (first..=last).find(|&k| row[k] == 1.0).unwrap();
            assert!((first..peak).all(|k| row[k] <= row[k + 1]));
            assert!((peak..last).all(|k| row[k] >= row[k + 1]));
        }
        assert!(fb.centers_hz.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn supports_cover_the_band() {
        let fb = MelFilterbank::standard(16000).unwrap();
        for k in 0..fb.bins {
            let f = k as f64 * 16000.0 / 2048.0;
            if f > 80.0 && f < 7000.0 {
                assert!((0..fb.n_mels).any(|m| fb.row(m)[k] > 0.0), "bin {k} uncovered");
            }
        }
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(mel_filterbank(80, 7000.0, 80.0, 2048, 16000).is_err());
        assert!(mel_filterbank(80, 80.0, 9000.0, 2048, 16000).is_err());
    }
}
