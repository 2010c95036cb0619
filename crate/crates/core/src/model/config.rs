use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::order::OrderNormalization;
use crate::prompts::DEFAULT_DISK_RADIUS;

/// Ablation variant of the fusion stack.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    #[default]
    Full,
    /// σ fixed at zero: order maps have no effect.
    NoOrder,
    /// Object masks never applied: plain cross-attention in every round.
    NoObject,
    /// No sparse embeddings and hence no order or object attention: every
    /// slot holds the non-point embedding, the fusion blocks are skipped and
    /// clicks reach the decoder only through the dense map.
    NoSparse,
    /// The dense click embedding is not added to the features.
    NoDense,
}

impl Arm {
    pub const ALL: [Arm; 5] = [Arm::Full, Arm::NoOrder, Arm::NoObject, Arm::NoSparse, Arm::NoDense];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Full => "full",
            Arm::NoOrder => "no_order",
            Arm::NoObject => "no_object",
            Arm::NoSparse => "no_sparse",
            Arm::NoDense => "no_dense",
        }
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown arm {s:?}")))
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub patch_size: usize,
    pub embed_dim: usize,
    pub encoder_blocks: usize,
    pub encoder_heads: usize,
    pub fusion_blocks: usize,
    pub ffn_hidden: usize,
    /// Channels after the first and second upsampling stage.
    pub decoder_channels: [usize; 2],
    pub input_size: usize,
    pub disk_radius: usize,
    pub order_normalization: OrderNormalization,
    pub arm: Arm,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            patch_size: 8,
            embed_dim: 128,
            encoder_blocks: 4,
            encoder_heads: 4,
            fusion_blocks: 3,
            ffn_hidden: 256,
            decoder_channels: [64, 32],
            input_size: 64,
            disk_radius: DEFAULT_DISK_RADIUS,
            order_normalization: OrderNormalization::PerMap,
            arm: Arm::Full,
        }
    }
}

impl ModelConfig {
    /// Checks the structural constants and internal consistency.
    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        if self.embed_dim != 128 {
            return Err(Error::Config(format!("embed_dim must be 128, got {}", self.embed_dim)));
        }
        if self.fusion_blocks != 3 {
            return Err(Error::Config(format!("fusion_blocks must be 3, got {}", self.fusion_blocks)));
        }
        Ok(())
    }

    /// Consistency checks only; used directly by small test models.
    pub fn validate_shape(&self) -> Result<()> {
        let c = self.embed_dim;
        if c == 0 || !c.is_multiple_of(4) {
            return Err(Error::Config("embed_dim must be a positive multiple of 4".into()));
        }
        if self.encoder_heads == 0 || !c.is_multiple_of(self.encoder_heads) {
            return Err(Error::Config("embed_dim must split evenly across encoder heads".into()));
        }
        if self.patch_size < 4 || !self.patch_size.is_multiple_of(4) {
            return Err(Error::Config("patch_size must be a multiple of 4".into()));
        }
        if self.disk_radius == 0 {
            return Err(Error::Config("disk_radius must be at least 1".into()));
        }
        if self.decoder_channels.contains(&0) || self.ffn_hidden == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Small configuration for gradient checks and fast tests.
    pub fn tiny() -> Self {
        Self {
            patch_size: 4,
            embed_dim: 8,
            encoder_blocks: 1,
            encoder_heads: 2,
            fusion_blocks: 3,
            ffn_hidden: 16,
            decoder_channels: [6, 4],
            input_size: 16,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub gamma: f64,
    pub eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { gamma: 2.0, eps: 1e-8 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::tiny().validate_shape().unwrap();
        assert!(ModelConfig { fusion_blocks: 2, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn arm_names_round_trip() {
        for a in Arm::ALL {
            assert_eq!(a.name().parse::<Arm>().unwrap(), a);
        }
        assert!("bogus".parse::<Arm>().is_err());
    }
}
