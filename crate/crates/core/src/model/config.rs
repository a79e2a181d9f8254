use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which frequency branches the network keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchMode {
    Full,
    MidHigh,
    HighOnly,
}

impl BranchMode {
    pub fn has_low(self) -> bool {
        self == BranchMode::Full
    }

    pub fn has_mid(self) -> bool {
        self != BranchMode::HighOnly
    }

    pub fn branch_count(self) -> usize {
        match self {
            BranchMode::Full => 3,
            BranchMode::MidHigh => 2,
            BranchMode::HighOnly => 1,
        }
    }
}

/// Architectural hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub channels: usize,
    /// Up/down projection pairs per projection operation.
    pub projection_depth_m: usize,
    pub angular_size: (usize, usize),
    /// Spatial-angular residual blocks per scale-up or scale-down block.
    pub fusion_blocks: usize,
    pub branch_mode: BranchMode,
    /// Feed enhanced lower-frequency features into the next branch.
    pub interaction: bool,
    /// `false` swaps every projection operation for a stack of residual
    /// blocks of about the same size.
    pub use_fp: bool,
    pub share_fp_instances: bool,
    /// Extra residual blocks on the high branch, added by ablations to keep
    /// the parameter count level.
    #[serde(default)]
    pub padding_blocks: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 32,
            projection_depth_m: 2,
            angular_size: (5, 5),
            fusion_blocks: 2,
            branch_mode: BranchMode::Full,
            interaction: true,
            use_fp: true,
            share_fp_instances: false,
            padding_blocks: 0,
        }
    }
}

impl ModelConfig {
    /// Small configuration used for single-core runs and tests.
    pub fn desk() -> Self {
        Self {
            channels: 8,
            projection_depth_m: 1,
            fusion_blocks: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::config("model.channels must be positive"));
        }
        if self.projection_depth_m == 0 {
            return Err(Error::config("model.projection_depth_m must be at least 1"));
        }
        if self.angular_size.0 == 0 || self.angular_size.1 == 0 {
            return Err(Error::config("model.angular_size must be at least 1x1"));
        }
        Ok(())
    }
}

fn conv(cin: usize, cout: usize, k: usize) -> usize {
    cout * cin * k * k + cout
}

/// Learnable scalars in one spatial-angular residual block.
pub fn fusion_block_params(channels: usize) -> usize {
    2 * conv(channels, channels, 3)
}

pub(crate) fn scale_up_params(c: &ModelConfig) -> usize {
    c.fusion_blocks * fusion_block_params(c.channels) + conv(c.channels, c.channels, 1)
}

pub(crate) fn scale_down_params(c: &ModelConfig) -> usize {
    conv(c.channels, c.channels, 4) + c.fusion_blocks * fusion_block_params(c.channels)
}

/// Parameters of one projection operation built from up/down projection units.
pub(crate) fn projection_params(c: &ModelConfig) -> usize {
    let unit = scale_up_params(c) + scale_down_params(c);
    (2 * c.projection_depth_m + 1) * unit + scale_down_params(c)
}

/// Residual blocks standing in for one projection operation when `use_fp`
/// is off.
pub(crate) fn replacement_blocks(c: &ModelConfig) -> usize {
    (projection_params(c) / fusion_block_params(c.channels)).max(1)
}

fn fp_slot_params(c: &ModelConfig) -> usize {
    if c.use_fp {
        projection_params(c)
    } else {
        replacement_blocks(c) * fusion_block_params(c.channels)
    }
}

/// Distinct projection instances the config instantiates.
pub(crate) fn fp_instances(c: &ModelConfig) -> usize {
    if c.share_fp_instances {
        3
    } else {
        match c.branch_mode {
            BranchMode::Full => 6,
            BranchMode::MidHigh => 5,
            BranchMode::HighOnly => 3,
        }
    }
}

pub(crate) fn mix_convs(c: &ModelConfig) -> usize {
    if !c.interaction {
        return 0;
    }
    usize::from(c.branch_mode.has_low()) + usize::from(c.branch_mode.has_mid())
}

/// Exact number of learnable scalars for `config`.
pub fn count_params(c: &ModelConfig) -> usize {
    let ch = c.channels;
    let block = fusion_block_params(ch);
    let decompose = 2 * conv(1, ch, 3) + conv(ch, ch, 3);
    let branches = fp_instances(c) * fp_slot_params(c) + mix_convs(c) * conv(2 * ch, ch, 1);
    let reconstruct =
        conv(c.branch_mode.branch_count() * ch, ch, 1) + c.fusion_blocks * block + conv(ch, 1, 3);
    decompose + branches + c.padding_blocks * block + reconstruct
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fusion_block_closed_form() {
        // spatial 3x3 and angular 3x3, each C*C*9 weights + C biases
        assert_eq!(fusion_block_params(32), 2 * (32 * 32 * 9 + 32));
    }

    #[test]
    fn doubling_channels_more_than_doubles_count() {
        for base in [ModelConfig::default(), ModelConfig::desk()] {
            let mut wide = base.clone();
            wide.channels *= 2;
            assert!(count_params(&wide) > 2 * count_params(&base));
        }
    }

    #[test]
    fn validation_rejects_degenerate_configs() {
        let c = ModelConfig {
            channels: 0,
            ..ModelConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = ModelConfig {
            projection_depth_m: 0,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(ModelConfig::desk().validate().is_ok());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = ModelConfig {
            branch_mode: BranchMode::MidHigh,
            padding_blocks: 3,
            ..ModelConfig::desk()
        };
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"mid_high\""));
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
    }
}
