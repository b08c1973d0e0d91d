use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roomsim::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_steps: usize,
    pub peak_lr: f64,
    pub warmup_frac: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub task: Task,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Save a checkpoint every this many steps; 0 disables periodic saves.
    #[serde(default)]
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 75_000,
            peak_lr: 3e-4,
            warmup_frac: 0.01,
            batch_size: 8,
            seed: 0,
            task: Task::Doa,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.warmup_frac > 0.0 && self.warmup_frac < 1.0) {
            return Err(Error::InvalidConfig("warmup_frac must lie in (0, 1)".into()));
        }
        if !(self.peak_lr > 0.0) {
            return Err(Error::InvalidConfig("peak_lr must be positive".into()));
        }
        if self.total_steps == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("total_steps and batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn warmup_end(&self) -> usize {
        (self.warmup_frac * self.total_steps as f64).round() as usize
    }
}

/// Linear warmup from 0 to `peak_lr` over `[0, warmup_end]`, then linear
/// decay to 0 at `total_steps`. Steps outside the range are clamped.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> f64 {
    let total = cfg.total_steps;
    let step = step.min(total);
    let warm = cfg.warmup_end().min(total);
    if step <= warm {
        if warm == 0 {
            cfg.peak_lr
        } else {
            cfg.peak_lr * step as f64 / warm as f64
        }
    } else {
        cfg.peak_lr * (total - step) as f64 / (total - warm) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_knots() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.warmup_end(), 750);
        assert_eq!(lr_at(750, &cfg), 3e-4);
        assert_eq!(lr_at(75_000, &cfg), 0.0);
        assert_eq!(lr_at(0, &cfg), 0.0);
        assert!((lr_at(37_875, &cfg) - 1.5e-4).abs() < 1e-18);
        assert_eq!(lr_at(80_000, &cfg), 0.0);
    }

    #[test]
    fn piecewise_linear_with_single_peak() {
        let cfg = TrainConfig {
            total_steps: 1000,
            ..Default::default()
        };
        let lrs: Vec<f64> = (0..=1000).map(|s| lr_at(s, &cfg)).collect();
        let peak = lrs.iter().cloned().fold(0.0, f64::max);
        assert_eq!(peak, cfg.peak_lr);
        assert_eq!(lrs.iter().filter(|v| **v == peak).count(), 1);
        for s in 1..999 {
            if s == cfg.warmup_end() {
                continue;
            }
            let second = lrs[s - 1] - 2.0 * lrs[s] + lrs[s + 1];
            assert!(second.abs() < 1e-18, "step {s}");
        }
    }

    #[test]
    fn invalid_configs() {
        for bad in [
            TrainConfig { warmup_frac: 0.0, ..Default::default() },
            TrainConfig { warmup_frac: 1.0, ..Default::default() },
            TrainConfig { peak_lr: 0.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
