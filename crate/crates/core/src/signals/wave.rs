use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// Multichannel time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiWave {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

/// Sample encoding used when writing WAV files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    Pcm16,
    #[default]
    Float32,
}

impl MultiWave {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Empty("wave has no channels".into()));
        }
        let n = channels[0].len();
        if n == 0 {
            return Err(Error::Empty("wave has no samples".into()));
        }
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::Shape("channels differ in length".into()));
        }
        if channels.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("non-finite sample".into()));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn peak(&self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|x| x * gain).collect())
                .collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let wav_err = |source| Error::Wav {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = WavReader::open(path).map_err(wav_err)?;
        let spec = reader.spec();
        let nch = spec.channels as usize;
        if !(1..=8).contains(&nch) {
            return Err(Error::InvalidConfig(format!(
                "{}: unsupported channel count {nch}",
                path.display()
            )));
        }
        let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
            (SampleFormat::Float, 32) => reader
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?,
            (SampleFormat::Int, bits) if bits <= 32 => {
                let scale = (1u64 << (bits - 1)) as f64;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f64 / scale))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(wav_err)?
            }
            (fmt, bits) => {
                return Err(Error::InvalidConfig(format!(
                    "{}: unsupported sample format {fmt:?}/{bits}",
                    path.display()
                )))
            }
        };
        let mut channels = vec![Vec::with_capacity(interleaved.len() / nch); nch];
        for frame in interleaved.chunks_exact(nch) {
            for (c, &v) in frame.iter().enumerate() {
                channels[c].push(v);
            }
        }
        Self::new(channels, spec.sample_rate)
    }

    pub fn write_wav(&self, path: impl AsRef<Path>, encoding: WavEncoding) -> Result<()> {
        let path = path.as_ref();
        let wav_err = |source| Error::Wav {
            path: path.to_path_buf(),
            source,
        };
        let spec = match encoding {
            WavEncoding::Pcm16 => WavSpec {
                channels: self.num_channels() as u16,
                sample_rate: self.sample_rate,
                bits_per_sample: 16,
                sample_format: SampleFormat::Int,
            },
            WavEncoding::Float32 => WavSpec {
                channels: self.num_channels() as u16,
                sample_rate: self.sample_rate,
                bits_per_sample: 32,
                sample_format: SampleFormat::Float,
            },
        };
        let mut writer = WavWriter::create(path, spec).map_err(wav_err)?;
        for n in 0..self.len() {
            for ch in &self.channels {
                match encoding {
                    WavEncoding::Pcm16 => {
                        let v = (ch[n] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                        writer.write_sample(v).map_err(wav_err)?;
                    }
                    WavEncoding::Float32 => writer.write_sample(ch[n] as f32).map_err(wav_err)?,
                }
            }
        }
        writer.finalize().map_err(wav_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_channels() {
        assert!(MultiWave::new(vec![vec![0.0; 3], vec![0.0; 2]], 16000).is_err());
        assert!(MultiWave::new(vec![], 16000).is_err());
        assert!(MultiWave::new(vec![vec![f64::NAN]], 16000).is_err());
    }

    #[test]
    fn wav_round_trip_float_and_pcm() {
        let dir = tempfile::tempdir().unwrap();
        let wave = MultiWave::new(
            vec![
                (0..100).map(|i| (i as f64 * 0.1).sin() * 0.5).collect(),
                (0..100).map(|i| (i as f64 * 0.07).cos() * 0.25).collect(),
            ],
            16000,
        )
        .unwrap();
        let f = dir.path().join("f.wav");
        wave.write_wav(&f, WavEncoding::Float32).unwrap();
        let back = MultiWave::read_wav(&f).unwrap();
        assert_eq!(back.num_channels(), 2);
        for (a, b) in wave.channels().iter().flatten().zip(back.channels().iter().flatten()) {
            assert_eq!(*a as f32 as f64, *b);
        }
        let p = dir.path().join("p.wav");
        wave.write_wav(&p, WavEncoding::Pcm16).unwrap();
        let back = MultiWave::read_wav(&p).unwrap();
        for (a, b) in wave.channels().iter().flatten().zip(back.channels().iter().flatten()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }
}
