use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Formant centre frequencies (Hz) of a few vowel-like spectral envelopes.
const VOWELS: [[f64; 3]; 5] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [440.0, 1020.0, 2240.0],
];

fn formant_gain(f: f64, formants: &[f64; 3]) -> f64 {
    formants
        .iter()
        .enumerate()
        .map(|(i, fc)| {
            let bw = 80.0 + 40.0 * i as f64;
            let amp = 1.0 / (1.0 + i as f64);
            amp / (1.0 + ((f - fc) / bw).powi(2))
        })
        .sum::<f64>()
        + 0.02
}

/// Deterministic speech-like test signal: voiced syllables with a drifting
/// pitch and vowel formants, unvoiced noise bursts and short pauses.
/// Peak amplitude is normalized to 0.5.
pub fn speechlike(seed: u64, seconds: f64, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    let n = (seconds * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; n];
    let mut pos = (rng.random_range(0.0..0.05) * fs) as usize;
    let base_f0: f64 = rng.random_range(100.0..200.0);
    while pos < n {
        let len = (rng.random_range(0.12..0.3) * fs) as usize;
        let end = (pos + len).min(n);
        let voiced = rng.random_bool(0.75);
        let gain = rng.random_range(0.4..1.0);
        if voiced {
            let formants = VOWELS[rng.random_range(0..VOWELS.len())];
            let f0_start = base_f0 * rng.random_range(0.85..1.15);
            let f0_end = base_f0 * rng.random_range(0.85..1.15);
            let harmonics = (4000.0 / f0_start.max(f0_end)) as usize;
            let amps: Vec<f64> = (1..=harmonics)
                .map(|h| formant_gain(h as f64 * f0_start, &formants) / (h as f64).sqrt())
                .collect();
            let phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let mut phase = 0.0;
            for i in pos..end {
                let u = (i - pos) as f64 / (end - pos) as f64;
                let f0 = f0_start + (f0_end - f0_start) * u;
                phase += 2.0 * PI * f0 / fs;
                let env = (PI * u).sin().powf(0.7);
                let mut v = 0.0;
                for (h, (a, p)) in amps.iter().zip(&phases).enumerate() {
                    v += a * ((h + 1) as f64 * phase + p).sin();
                }
                out[i] += gain * env * v;
            }
        } else {
            // first-difference emphasised noise burst
            let mut prev = 0.0;
            for i in pos..end {
                let u = (i - pos) as f64 / (end - pos) as f64;
                let env = (PI * u).sin();
                let w: f64 = rng.random_range(-1.0..1.0);
                out[i] += 0.3 * gain * env * (w - 0.7 * prev);
                prev = w;
            }
        }
        pos = end + (rng.random_range(0.03..0.15) * fs) as usize;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in out.iter_mut() {
            *v *= 0.5 / peak;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_normalized() {
        let a = speechlike(3, 1.0, 16000);
        let b = speechlike(3, 1.0, 16000);
        assert_eq!(a, b);
        assert_eq!(a.len(), 16000);
        let peak = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.5).abs() < 1e-12);
        assert_ne!(a, speechlike(4, 1.0, 16000));
    }
}
