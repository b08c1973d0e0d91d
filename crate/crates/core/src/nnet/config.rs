use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_rate: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub head_hidden: usize,
    pub in_dim: usize,
    pub out_mag_dim: usize,
    pub n_doa_classes: usize,
    pub sigma_init: f64,
    #[serde(default)]
    pub dense_variant: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ModelConfig {
    /// Full-size model: 3 layers of width 768 with 8 heads.
    pub fn full() -> Self {
        Self {
            d_rate: 3,
            d_model: 768,
            n_layers: 3,
            n_heads: 8,
            ffn_dim: 2048,
            head_hidden: 1024,
            in_dim: 1920,
            out_mag_dim: 960,
            n_doa_classes: 72,
            sigma_init: 10.0,
            dense_variant: false,
        }
    }

    /// Densely connected stack with narrower feed-forward blocks.
    pub fn full_dense() -> Self {
        Self {
            ffn_dim: 1024,
            dense_variant: true,
            ..Self::full()
        }
    }

    /// Desk-scale model used for overfitting runs.
    pub fn small() -> Self {
        Self {
            d_model: 128,
            n_layers: 2,
            n_heads: 4,
            ffn_dim: 512,
            head_hidden: 256,
            ..Self::full()
        }
    }

    /// Minimal model for gradient checks; input/output widths shrunk too.
    pub fn tiny() -> Self {
        Self {
            d_rate: 3,
            d_model: 32,
            n_layers: 2,
            n_heads: 2,
            ffn_dim: 64,
            head_hidden: 32,
            in_dim: 24,
            out_mag_dim: 12,
            n_doa_classes: 72,
            sigma_init: 10.0,
            dense_variant: false,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_rate", self.d_rate),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("ffn_dim", self.ffn_dim),
            ("head_hidden", self.head_hidden),
            ("in_dim", self.in_dim),
            ("out_mag_dim", self.out_mag_dim),
            ("n_doa_classes", self.n_doa_classes),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(self.sigma_init > 0.0) {
            return Err(Error::InvalidConfig("sigma_init must be positive".into()));
        }
        Ok(())
    }
}
