use super::config::{count_params, fusion_block_params, BranchMode, ModelConfig};
use crate::error::{Error, Result};

/// Recognized ablation variants, in report order.
pub const ABLATION_VARIANTS: [&str; 7] = [
    "freq:h",
    "freq:mh",
    "freq:lmh",
    "proj:none",
    "proj:interact",
    "proj:fp",
    "proj:full",
];

/// Config for one ablation variant of `base`. Variants that remove
/// parameters get residual blocks on the high branch so the total stays
/// within half a block of the full model.
pub fn make_ablation(base: &ModelConfig, variant: &str) -> Result<ModelConfig> {
    let (mode, interaction, use_fp) = match variant {
        "freq:lmh" | "proj:full" => return Ok(base.clone()),
        "freq:h" => (BranchMode::HighOnly, true, true),
        "freq:mh" => (BranchMode::MidHigh, true, true),
        "proj:none" => (BranchMode::Full, false, false),
        "proj:interact" => (BranchMode::Full, true, false),
        "proj:fp" => (BranchMode::Full, false, true),
        other => {
            return Err(Error::config(format!(
                "unknown ablation variant {other:?}; expected one of {}",
                ABLATION_VARIANTS.join(", ")
            )))
        }
    };
    let full = ModelConfig {
        branch_mode: BranchMode::Full,
        interaction: true,
        use_fp: true,
        ..base.clone()
    };
    let mut cfg = ModelConfig {
        branch_mode: mode,
        interaction,
        use_fp,
        padding_blocks: 0,
        ..base.clone()
    };
    let target = count_params(&full) as f64;
    let deficit = target - count_params(&cfg) as f64;
    let block = fusion_block_params(base.channels) as f64;
    cfg.padding_blocks = (deficit / block).round().max(0.0) as usize;
    cfg.padding_blocks += full.padding_blocks;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_variant_is_a_config_error() {
        assert!(matches!(
            make_ablation(&ModelConfig::default(), "freq:x"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn identity_variants_return_base() {
        let base = ModelConfig::desk();
        assert_eq!(make_ablation(&base, "freq:lmh").unwrap(), base);
        assert_eq!(make_ablation(&base, "proj:full").unwrap(), base);
    }

    #[test]
    fn variants_encode_their_rows() {
        let base = ModelConfig::default();
        let h = make_ablation(&base, "freq:h").unwrap();
        assert_eq!(h.branch_mode, BranchMode::HighOnly);
        let none = make_ablation(&base, "proj:none").unwrap();
        assert!(!none.interaction && !none.use_fp);
        let fp = make_ablation(&base, "proj:fp").unwrap();
        assert!(!fp.interaction && fp.use_fp);
        let inter = make_ablation(&base, "proj:interact").unwrap();
        assert!(inter.interaction && !inter.use_fp);
    }
}
