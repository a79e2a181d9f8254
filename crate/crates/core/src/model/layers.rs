//! Building blocks shared by every stage of the network.

use crate::autograd::{AngularGrid, Float, Tensor, Var};
use crate::error::{Error, Result};

use super::params::ParamBuilder;

pub(crate) const LEAKY_SLOPE: f64 = 0.1;

/// Relative size of the random part of the structured scale-up and
/// scale-down initializations.
const INIT_PERTURBATION: f64 = 0.1;

/// Per-channel identity, `[c, c, 1, 1]`.
fn identity_kernel<T: Float>(c: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(&[c, c, 1, 1]);
    for i in 0..c {
        t.data_mut()[i * c + i] = T::one();
    }
    t
}

/// Per-channel `k k^T` with `k = [-1, 3, 3, -1] / 4`, `[c, c, 4, 4]`. With
/// stride 2 over a one-pixel edge-replicated border it undoes bilinear x2
/// upsampling exactly.
fn inverse_bilinear_kernel<T: Float>(c: usize) -> Tensor<T> {
    const K: [f64; 4] = [-0.25, 0.75, 0.75, -0.25];
    let mut t = Tensor::zeros(&[c, c, 4, 4]);
    for i in 0..c {
        for (y, ky) in K.iter().enumerate() {
            for (x, kx) in K.iter().enumerate() {
                t.data_mut()[((i * c + i) * 4 + y) * 4 + x] = T::of(ky * kx);
            }
        }
    }
    t
}

/// Parameter leaves and the angular grid for one forward pass.
pub struct Ctx<'a, T: Float> {
    vars: &'a [Var<T>],
    grid: AngularGrid,
}

impl<'a, T: Float> Ctx<'a, T> {
    pub fn new(vars: &'a [Var<T>], grid: AngularGrid) -> Self {
        Self { vars, grid }
    }

    pub fn grid(&self) -> AngularGrid {
        self.grid
    }

    fn var(&self, id: usize) -> &Var<T> {
        &self.vars[id]
    }
}

/// Per-view 2-D convolution with bias.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: usize,
    pub bias: usize,
    stride: usize,
    pad: usize,
    edge: bool,
}

impl Conv {
    pub fn build<T: Float>(
        b: &mut ParamBuilder<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        b.scoped(name, |b| Conv {
            weight: b.kaiming_uniform("weight", &[cout, cin, kernel, kernel]),
            bias: b.zeros("bias", &[cout]),
            stride,
            pad,
            edge: false,
        })
    }

    /// Like [`Conv::build`] with the weight set to `base` plus a small
    /// perturbation.
    fn build_near<T: Float>(
        b: &mut ParamBuilder<T>,
        name: &str,
        base: Tensor<T>,
        stride: usize,
        pad: usize,
    ) -> Self {
        let cout = base.shape()[0];
        b.scoped(name, |b| Conv {
            weight: b.perturbed("weight", base, INIT_PERTURBATION),
            bias: b.zeros("bias", &[cout]),
            stride,
            pad,
            edge: false,
        })
    }

    /// Pads by repeating edge pixels instead of zeros.
    fn edge_padded(self) -> Self {
        Self { edge: true, ..self }
    }

    pub fn forward<T: Float>(&self, ctx: &Ctx<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let (w, b) = (ctx.var(self.weight), Some(ctx.var(self.bias)));
        if self.edge {
            x.conv2d_edge(w, b, self.stride, self.pad)
        } else {
            x.conv2d(w, b, self.stride, self.pad)
        }
    }
}

/// 3x3 convolution across the view grid.
#[derive(Clone, Debug)]
pub struct AngularConv {
    pub weight: usize,
    pub bias: usize,
}

impl AngularConv {
    fn build<T: Float>(b: &mut ParamBuilder<T>, name: &str, channels: usize) -> Self {
        b.scoped(name, |b| AngularConv {
            weight: b.perturbed(
                "weight",
                Tensor::zeros(&[channels, channels, 3, 3]),
                INIT_PERTURBATION,
            ),
            bias: b.zeros("bias", &[channels]),
        })
    }

    fn forward<T: Float>(&self, ctx: &Ctx<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        x.angular_conv(ctx.var(self.weight), Some(ctx.var(self.bias)), ctx.grid)
    }
}

/// Spatial-angular residual block: `x + angular(lrelu(spatial(x)))`.
#[derive(Clone, Debug)]
pub struct FusionBlock {
    pub spatial: Conv,
    pub angular: AngularConv,
}

impl FusionBlock {
    pub fn build<T: Float>(b: &mut ParamBuilder<T>, name: &str, channels: usize) -> Self {
        b.scoped(name, |b| FusionBlock {
            spatial: Conv::build(b, "spatial", channels, channels, 3, 1, 1),
            angular: AngularConv::build(b, "angular", channels),
        })
    }

    pub fn forward<T: Float>(&self, ctx: &Ctx<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let s = self.spatial.forward(ctx, x)?.leaky_relu(T::of(LEAKY_SLOPE));
        x.add(&self.angular.forward(ctx, &s)?)
    }
}

/// A chain of residual blocks.
#[derive(Clone, Debug, Default)]
pub struct FusionStack {
    pub blocks: Vec<FusionBlock>,
}

impl FusionStack {
    pub fn build<T: Float>(
        b: &mut ParamBuilder<T>,
        name: &str,
        channels: usize,
        count: usize,
    ) -> Self {
        b.scoped(name, |b| FusionStack {
            blocks: (0..count)
                .map(|i| FusionBlock::build(b, &format!("block{i}"), channels))
                .collect(),
        })
    }

    pub fn forward<T: Float>(&self, ctx: &Ctx<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let mut h = x.clone();
        for block in &self.blocks {
            h = block.forward(ctx, &h)?;
        }
        Ok(h)
    }
}

/// Fusion, then a 1x1 convolution that starts near the identity, then
/// bilinear x2. The 1x1 convolution commutes with the upsampling, so it runs
/// at the lower resolution.
#[derive(Clone, Debug)]
pub struct ScaleUp {
    pub fusion: FusionStack,
    pub proj: Conv,
}

impl ScaleUp {
    pub fn build<T: Float>(
        b: &mut ParamBuilder<T>,
        name: &str,
        channels: usize,
        fusion_blocks: usize,
    ) -> Self {
        b.scoped(name, |b| ScaleUp {
            fusion: FusionStack::build(b, "fusion", channels, fusion_blocks),
            proj: Conv::build_near(b, "proj", identity_kernel(channels), 1, 0),
        })
    }

    pub fn forward<T: Float>(&self, ctx: &Ctx<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let fused = self.fusion.forward(ctx, x)?;
        self.proj.forward(ctx, &fused)?.upsample(2)
    }
}

/// Edge padding, a 4x4 stride-2 convolution that starts near the inverse of
/// [`ScaleUp`], then fusion.
#[derive(Clone, Debug)]
pub struct ScaleDown {
    pub conv: Conv,
    pub fusion: FusionStack,
}

impl ScaleDown {
    pub fn build<T: Float>(
        b: &mut ParamBuilder<T>,
        name: &str,
        channels: usize,
        fusion_blocks: usize,
    ) -> Self {
        b.scoped(name, |b| ScaleDown {
            conv: Conv::build_near(b, "conv", inverse_bilinear_kernel(channels), 2, 1)
                .edge_padded(),
            fusion: FusionStack::build(b, "fusion", channels, fusion_blocks),
        })
    }

    pub fn forward<T: Float>(&self, ctx: &Ctx<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let [_, _, h, w] = x.value().dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::size(format!(
                "scale-down needs even dimensions, got {h}x{w}"
            )));
        }
        let reduced = self.conv.forward(ctx, x)?;
        self.fusion.forward(ctx, &reduced)
    }
}
