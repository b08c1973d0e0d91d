//! Non-neural DOA baselines on the 72-point source-circle grid.

mod grid;
mod music;
mod peaks;
mod srp;

use serde::{Deserialize, Serialize};

pub use grid::{steering_delays, SteeringGrid};
pub use music::{
    music_spectrum, narrowband_music, noise_subspace, spatial_covariance, steering_vector,
    MUSIC_CAP,
};
pub use peaks::top_k_peaks;
pub use srp::srp_phat;

use crate::error::Result;
use crate::signals::{ComplexSpec, StftConfig};

/// Analysis band in Hz, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl Default for Band {
    fn default() -> Self {
        Self {
            lo_hz: 300.0,
            hi_hz: 3500.0,
        }
    }
}

impl Band {
    /// One-sided bin indices inside the band.
    pub fn bins(&self, cfg: &StftConfig, sample_rate: u32) -> Vec<usize> {
        (0..cfg.bins())
            .filter(|&k| {
                let f = cfg.bin_hz(k, sample_rate);
                f >= self.lo_hz && f <= self.hi_hz
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoaMethod {
    SrpPhat,
    Music,
}

impl DoaMethod {
    pub fn spectrum(self, spec: &ComplexSpec, grid: &SteeringGrid, band: Band) -> Result<Vec<f64>> {
        match self {
            DoaMethod::SrpPhat => srp_phat(spec, grid, band),
            DoaMethod::Music => music_spectrum(spec, grid, 1, band),
        }
    }

    /// Up to `k` candidate angles in degrees, best first.
    pub fn top_k(self, spec: &ComplexSpec, grid: &SteeringGrid, band: Band, k: usize) -> Result<Vec<f64>> {
        Ok(top_k_peaks(&self.spectrum(spec, grid, band)?, k)
            .into_iter()
            .map(|(angle, _)| angle)
            .collect())
    }
}
