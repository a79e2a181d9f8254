use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightfield::ScaleTag;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Finetune,
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Phase::Train),
            "finetune" => Ok(Phase::Finetune),
            other => Err(Error::config(format!("unknown phase {other:?}"))),
        }
    }
}

/// Optimizer, schedule and sampling settings. An epoch is
/// `iters_per_epoch` optimizer steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub phase: Phase,
    pub lr0: f64,
    /// The learning rate halves every `halve_every` epochs.
    pub halve_every: u64,
    pub total_epochs: u64,
    pub batch: usize,
    pub patch: usize,
    pub scale: u32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub iters_per_epoch: u64,
    /// Validation period in epochs.
    pub val_every: u64,
    /// Global L2 gradient norm limit; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl TrainConfig {
    /// Full-length schedule for `phase` with the batch and patch size used
    /// at `scale` (2 samples of 72x72 at x2, 4 of 64x64 at x4).
    pub fn defaults(phase: Phase, scale: u32) -> Result<Self> {
        let (batch, patch) = match scale {
            2 => (2, 72),
            4 => (4, 64),
            other => {
                return Err(Error::config(format!(
                    "no default batch/patch for scale {other}"
                )))
            }
        };
        let (halve_every, total_epochs) = match phase {
            Phase::Train => (2000, 8000),
            Phase::Finetune => (1000, 5000),
        };
        Ok(Self {
            phase,
            lr0: 1e-4,
            halve_every,
            total_epochs,
            batch,
            patch,
            scale,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            iters_per_epoch: 50,
            val_every: 10,
            grad_clip: None,
        })
    }

    /// 50 epochs of 20 steps on 16x16 patches, sized for a single CPU core.
    pub fn desk(scale: u32) -> Self {
        Self {
            phase: Phase::Train,
            lr0: 1e-3,
            halve_every: 25,
            total_epochs: 50,
            batch: 1,
            patch: 16,
            scale,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            iters_per_epoch: 20,
            val_every: 10,
            grad_clip: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::config(msg));
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return fail(format!("train.lr0 must be positive, got {}", self.lr0));
        }
        if self.halve_every == 0
            || self.total_epochs == 0
            || !self.total_epochs.is_multiple_of(self.halve_every)
        {
            return fail(format!(
                "train.total_epochs ({}) must be a positive multiple of train.halve_every ({})",
                self.total_epochs, self.halve_every
            ));
        }
        if self.batch == 0 || self.iters_per_epoch == 0 || self.val_every == 0 {
            return fail(
                "train.batch, train.iters_per_epoch and train.val_every must be positive".into(),
            );
        }
        if self.patch == 0 || !self.patch.is_multiple_of(4) {
            return fail(format!(
                "train.patch must be a positive multiple of 4, got {}",
                self.patch
            ));
        }
        ScaleTag::for_scale(self.scale)
            .map_err(|_| Error::config(format!("train.scale {} is not 2 or 4", self.scale)))?;
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("train.{name} must lie in [0, 1), got {b}"));
            }
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return fail(format!("train.eps must be positive, got {}", self.eps));
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return fail(format!("train.grad_clip must be positive, got {c}"));
            }
        }
        Ok(())
    }

    pub fn total_steps(&self) -> u64 {
        self.total_epochs * self.iters_per_epoch
    }
}

/// `lr0 * 0.5^floor(epoch / halve_every)` for `0 <= epoch <= total_epochs`.
pub fn lr_at(epoch: u64, config: &TrainConfig) -> Result<f64> {
    if epoch > config.total_epochs {
        return Err(Error::Range(format!(
            "epoch {epoch} is past the end of a {}-epoch schedule",
            config.total_epochs
        )));
    }
    if config.halve_every == 0 {
        return Err(Error::config("train.halve_every must be positive"));
    }
    let halvings = (epoch / config.halve_every) as i32;
    Ok(config.lr0 * 0.5f64.powi(halvings))
}
