//! Iterative up/down projection between a feature's native scale and twice
//! that scale.

use crate::autograd::{Float, Var};
use crate::error::Result;

use super::config::{replacement_blocks, ModelConfig};
use super::layers::{Ctx, FusionStack, ScaleDown, ScaleUp};
use super::params::ParamBuilder;

/// Intermediate values of one projection unit.
#[derive(Clone, Debug)]
pub struct ProjectionState<T: Float> {
    pub lr_feature: Var<T>,
    pub hr_feature: Var<T>,
    /// Back-projection residual, at the scale the unit started from.
    pub residual: Var<T>,
}

/// Up-projection unit. The same scale-up block lifts the feature and the
/// residual.
#[derive(Clone, Debug)]
pub struct Fupu {
    pub up: ScaleUp,
    pub down: ScaleDown,
}

impl Fupu {
    pub fn build<T: Float>(b: &mut ParamBuilder<T>, name: &str, c: &ModelConfig) -> Self {
        b.scoped(name, |b| Fupu {
            up: ScaleUp::build(b, "up", c.channels, c.fusion_blocks),
            down: ScaleDown::build(b, "down", c.channels, c.fusion_blocks),
        })
    }

    pub fn forward<T: Float>(&self, ctx: &Ctx<'_, T>, f: &Var<T>) -> Result<ProjectionState<T>> {
        let lifted = self.up.forward(ctx, f)?;
        let residual = self.down.forward(ctx, &lifted)?.sub(f)?;
        let hr_feature = self.up.forward(ctx, &residual)?.add(&lifted)?;
        Ok(ProjectionState {
            lr_feature: f.clone(),
            hr_feature,
            residual,
        })
    }
}

/// Down-projection unit, the mirror of [`Fupu`].
#[derive(Clone, Debug)]
pub struct Fdpu {
    pub down: ScaleDown,
    pub up: ScaleUp,
}

impl Fdpu {
    pub fn build<T: Float>(b: &mut ParamBuilder<T>, name: &str, c: &ModelConfig) -> Self {
        b.scoped(name, |b| Fdpu {
            down: ScaleDown::build(b, "down", c.channels, c.fusion_blocks),
            up: ScaleUp::build(b, "up", c.channels, c.fusion_blocks),
        })
    }

    pub fn forward<T: Float>(&self, ctx: &Ctx<'_, T>, u: &Var<T>) -> Result<ProjectionState<T>> {
        let reduced = self.down.forward(ctx, u)?;
        let residual = self.up.forward(ctx, &reduced)?.sub(u)?;
        let lr_feature = self.down.forward(ctx, &residual)?.add(&reduced)?;
        Ok(ProjectionState {
            lr_feature,
            hr_feature: u.clone(),
            residual,
        })
    }
}

/// Resolution-preserving projection: `m` rounds of up then down
/// projection, a final up projection, and a scale-down back to the input
/// resolution.
#[derive(Clone, Debug)]
pub struct FrequencyProjection {
    pub rounds: Vec<(Fupu, Fdpu)>,
    pub last: Fupu,
    pub restore: ScaleDown,
}

impl FrequencyProjection {
    pub fn build<T: Float>(b: &mut ParamBuilder<T>, name: &str, c: &ModelConfig) -> Self {
        b.scoped(name, |b| FrequencyProjection {
            rounds: (0..c.projection_depth_m)
                .map(|i| {
                    (
                        Fupu::build(b, &format!("fupu{i}"), c),
                        Fdpu::build(b, &format!("fdpu{i}"), c),
                    )
                })
                .collect(),
            last: Fupu::build(b, &format!("fupu{}", c.projection_depth_m), c),
            restore: ScaleDown::build(b, "restore", c.channels, c.fusion_blocks),
        })
    }

    pub fn forward<T: Float>(&self, ctx: &Ctx<'_, T>, f: &Var<T>) -> Result<Var<T>> {
        Ok(self.trace(ctx, f)?.0)
    }

    /// Output together with the state of every unit, in execution order.
    pub fn trace<T: Float>(
        &self,
        ctx: &Ctx<'_, T>,
        f: &Var<T>,
    ) -> Result<(Var<T>, Vec<ProjectionState<T>>)> {
        let mut states = Vec::with_capacity(2 * self.rounds.len() + 1);
        let mut x = f.clone();
        for (up, down) in &self.rounds {
            let s = up.forward(ctx, &x)?;
            let d = down.forward(ctx, &s.hr_feature)?;
            x = d.lr_feature.clone();
            states.push(s);
            states.push(d);
        }
        let s = self.last.forward(ctx, &x)?;
        let out = self.restore.forward(ctx, &s.hr_feature)?;
        states.push(s);
        Ok((out, states))
    }
}

/// One enhancement slot of a branch: a projection operation, or a
/// residual stack of similar size when projection is ablated.
#[derive(Clone, Debug)]
pub enum FpSlot {
    Projection(FrequencyProjection),
    Blocks(FusionStack),
}

impl FpSlot {
    pub fn build<T: Float>(b: &mut ParamBuilder<T>, name: &str, c: &ModelConfig) -> Self {
        if c.use_fp {
            FpSlot::Projection(FrequencyProjection::build(b, name, c))
        } else {
            FpSlot::Blocks(FusionStack::build(
                b,
                name,
                c.channels,
                replacement_blocks(c),
            ))
        }
    }

    pub fn forward<T: Float>(&self, ctx: &Ctx<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        match self {
            FpSlot::Projection(p) => p.forward(ctx, x),
            FpSlot::Blocks(s) => s.forward(ctx, x),
        }
    }
}
