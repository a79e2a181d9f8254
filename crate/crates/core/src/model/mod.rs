//! The super-resolution network.
//!
//! An input Y light field is split into high, middle and low frequency
//! feature maps at scales 1, 1/2 and 1/4. Each branch is refined by
//! projection operations that move between the branch's scale and twice
//! that scale, lower branches feed the next higher one, and a residual
//! reconstructor turns the three maps into a correction added to the
//! input.
//!
//! Parameters live in a flat [`ParamStore`] under dotted names:
//!
//! | prefix | contents |
//! |---|---|
//! | `decompose.conv_{a,b,c}` | frequency split convolutions |
//! | `fp.{low1,mid1,mid2,high1,high2,high3}` | per-branch projection slots |
//! | `fp.{fp1,fp2,fp3}` | the same slots when instances are shared |
//! | `interact.{mix_mid,mix_high}` | 1x1 channel reductions after concatenation |
//! | `high.padding` | parameter-matching blocks added by ablations |
//! | `reconstruct.{reduce,fbm,head}` | reconstructor |
//!
//! Every convolution owns `<name>.weight` (`[Cout, Cin, k, k]`) and
//! `<name>.bias`. Projection slots nest `fupu{i}` / `fdpu{i}` units, each with
//! `up.{fusion.block{j},proj}` and `down.{conv,fusion.block{j}}`, plus a final
//! `restore` scale-down. Fusion blocks hold `spatial` and `angular` convolutions.

mod ablation;
mod checkpoint;
mod config;
mod layers;
mod params;
mod projection;

pub use ablation::{make_ablation, ABLATION_VARIANTS};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, Checkpoint, Moments};
pub use config::{count_params, fusion_block_params, BranchMode, ModelConfig};
pub use layers::{AngularConv, Conv, Ctx, FusionBlock, FusionStack, ScaleDown, ScaleUp};
pub use params::{Param, ParamBuilder, ParamStore};
pub use projection::{Fdpu, FpSlot, FrequencyProjection, Fupu, ProjectionState};

use ndarray::Array5;

use crate::autograd::{AngularGrid, Float, Tensor, Var};
use crate::error::{Error, Result};
use crate::lightfield::{Colorspace, LightField, ScaleTag};

/// High, middle and low frequency feature maps, each `[C, N, h, w]`.
#[derive(Clone, Debug)]
pub struct FrequencyTriple<T: Float> {
    pub f_high: Var<T>,
    pub f_mid: Var<T>,
    pub f_low: Var<T>,
    pub enhanced: bool,
}

/// The three decomposition convolutions.
#[derive(Clone, Debug)]
pub struct Decomposition {
    /// Stride 1, input to full-scale features.
    pub conv_a: Conv,
    /// Stride 2, input to half-scale features.
    pub conv_b: Conv,
    /// Stride 2, half to quarter scale.
    pub conv_c: Conv,
}

#[derive(Clone, Debug)]
struct MidBranch {
    fp1: usize,
    mix: Option<Conv>,
    fp2: usize,
}

#[derive(Clone, Debug)]
struct HighBranch {
    padding: FusionStack,
    fp1: usize,
    fp2: usize,
    mix: Option<Conv>,
    fp3: usize,
}

#[derive(Clone, Debug)]
pub struct Reconstructor {
    pub reduce: Conv,
    pub fbm: FusionStack,
    pub head: Conv,
}

#[derive(Clone, Debug)]
struct Arch {
    decompose: Decomposition,
    slots: Vec<FpSlot>,
    low: Option<usize>,
    mid: Option<MidBranch>,
    high: HighBranch,
    reconstruct: Reconstructor,
}

/// Network definition plus its parameters.
#[derive(Clone, Debug)]
pub struct OfpNet<T: Float = f32> {
    config: ModelConfig,
    params: ParamStore<T>,
    arch: Arch,
}

fn build_arch<T: Float>(c: &ModelConfig, b: &mut ParamBuilder<T>) -> Arch {
    let ch = c.channels;
    let decompose = b.scoped("decompose", |b| Decomposition {
        conv_a: Conv::build(b, "conv_a", 1, ch, 3, 1, 1),
        conv_b: Conv::build(b, "conv_b", 1, ch, 3, 2, 1),
        conv_c: Conv::build(b, "conv_c", ch, ch, 3, 2, 1),
    });

    let mut slots = Vec::new();
    let mut shared: [Option<usize>; 3] = [None; 3];
    let mut slot = |b: &mut ParamBuilder<T>, name: &str, level: usize| -> usize {
        if c.share_fp_instances {
            if let Some(id) = shared[level - 1] {
                return id;
            }
        }
        let name = if c.share_fp_instances {
            format!("fp{level}")
        } else {
            name.to_string()
        };
        b.scoped("fp", |b| slots.push(FpSlot::build(b, &name, c)));
        let id = slots.len() - 1;
        shared[level - 1] = Some(id);
        id
    };

    let low = c.branch_mode.has_low().then(|| slot(b, "low1", 1));
    let mid = c.branch_mode.has_mid().then(|| {
        let fp1 = slot(b, "mid1", 1);
        let fp2 = slot(b, "mid2", 2);
        (fp1, fp2)
    });
    let (h1, h2, h3) = (
        slot(b, "high1", 1),
        slot(b, "high2", 2),
        slot(b, "high3", 3),
    );

    let (mix_mid, mix_high) = b.scoped("interact", |b| {
        let mix_mid = (c.interaction && c.branch_mode.has_low())
            .then(|| Conv::build(b, "mix_mid", 2 * ch, ch, 1, 1, 0));
        let mix_high = (c.interaction && c.branch_mode.has_mid())
            .then(|| Conv::build(b, "mix_high", 2 * ch, ch, 1, 1, 0));
        (mix_mid, mix_high)
    });
    let padding = b.scoped("high", |b| {
        FusionStack::build(b, "padding", ch, c.padding_blocks)
    });
    let reconstruct = b.scoped("reconstruct", |b| Reconstructor {
        reduce: Conv::build(b, "reduce", c.branch_mode.branch_count() * ch, ch, 1, 1, 0),
        fbm: FusionStack::build(b, "fbm", ch, c.fusion_blocks),
        head: Conv::build(b, "head", ch, 1, 3, 1, 1),
    });

    Arch {
        decompose,
        slots,
        low,
        mid: mid.map(|(fp1, fp2)| MidBranch {
            fp1,
            mix: mix_mid,
            fp2,
        }),
        high: HighBranch {
            padding,
            fp1: h1,
            fp2: h2,
            mix: mix_high,
            fp3: h3,
        },
        reconstruct,
    }
}

impl<T: Float> OfpNet<T> {
    /// Builds the network with seeded initialization. The output head starts
    /// at zero, so a fresh model maps its input to itself.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut b = ParamBuilder::new(seed);
        let arch = build_arch(&config, &mut b);
        let mut params = b.finish();
        let head = &arch.reconstruct.head;
        params.value_mut(head.weight).data_mut().fill(T::zero());
        params.value_mut(head.bias).data_mut().fill(T::zero());
        Ok(Self {
            config,
            params,
            arch,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.arch.decompose
    }

    pub fn reconstructor(&self) -> &Reconstructor {
        &self.arch.reconstruct
    }

    pub fn grid(&self) -> AngularGrid {
        AngularGrid {
            u: self.config.angular_size.0,
            v: self.config.angular_size.1,
        }
    }

    /// Same architecture and values in another precision.
    pub fn cast<U: Float>(&self) -> OfpNet<U> {
        OfpNet {
            config: self.config.clone(),
            params: self.params.cast(),
            arch: self.arch.clone(),
        }
    }

    pub fn decompose(&self, ctx: &Ctx<'_, T>, x: &Var<T>) -> Result<FrequencyTriple<T>> {
        let [c, _, h, w] = x.value().dims4()?;
        if c != 1 {
            return Err(Error::size(format!(
                "decomposition expects 1 input channel, got {c}"
            )));
        }
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::size(format!(
                "spatial size {h}x{w} is not divisible by 4"
            )));
        }
        let d = &self.arch.decompose;
        let half = d.conv_b.forward(ctx, x)?;
        let f_low = d.conv_c.forward(ctx, &half)?;
        let f_mid = half.sub(&f_low.upsample(2)?)?;
        let f_high = d.conv_a.forward(ctx, x)?.sub(&half.upsample(2)?)?;
        Ok(FrequencyTriple {
            f_high,
            f_mid,
            f_low,
            enhanced: false,
        })
    }

    fn slot(&self, ctx: &Ctx<'_, T>, id: usize, x: &Var<T>) -> Result<Var<T>> {
        self.arch.slots[id].forward(ctx, x)
    }

    fn mix(
        ctx: &Ctx<'_, T>,
        mix: Option<&Conv>,
        own: Var<T>,
        lower: Option<&Var<T>>,
    ) -> Result<Var<T>> {
        match (mix, lower) {
            (Some(conv), Some(lower)) => {
                let aligned = lower.upsample(2)?;
                conv.forward(ctx, &Var::concat(&[own, aligned])?)
            }
            _ => Ok(own),
        }
    }

    /// Coarse-to-fine enhancement of the three branches.
    pub fn branch_interact(
        &self,
        ctx: &Ctx<'_, T>,
        triple: &FrequencyTriple<T>,
    ) -> Result<FrequencyTriple<T>> {
        if triple.enhanced {
            return Err(Error::State(
                "frequency features are already enhanced".into(),
            ));
        }
        let low = match self.arch.low {
            Some(id) => Some(self.slot(ctx, id, &triple.f_low)?),
            None => None,
        };
        let mid = match &self.arch.mid {
            Some(m) => {
                let own = self.slot(ctx, m.fp1, &triple.f_mid)?;
                let mixed = Self::mix(ctx, m.mix.as_ref(), own, low.as_ref())?;
                Some(self.slot(ctx, m.fp2, &mixed)?)
            }
            None => None,
        };
        let hb = &self.arch.high;
        let padded = hb.padding.forward(ctx, &triple.f_high)?;
        let own = self.slot(ctx, hb.fp2, &self.slot(ctx, hb.fp1, &padded)?)?;
        let mixed = Self::mix(ctx, hb.mix.as_ref(), own, mid.as_ref())?;
        let high = self.slot(ctx, hb.fp3, &mixed)?;
        Ok(FrequencyTriple {
            f_high: high,
            f_mid: mid.unwrap_or_else(|| triple.f_mid.clone()),
            f_low: low.unwrap_or_else(|| triple.f_low.clone()),
            enhanced: true,
        })
    }

    /// Fuses the enhanced branches into a residual and adds it to `lr`.
    pub fn reconstruct(
        &self,
        ctx: &Ctx<'_, T>,
        triple: &FrequencyTriple<T>,
        lr: &Var<T>,
    ) -> Result<Var<T>> {
        if !triple.enhanced {
            return Err(Error::State(
                "reconstruction needs enhanced frequency features".into(),
            ));
        }
        let mode = self.config.branch_mode;
        let mut parts = Vec::with_capacity(3);
        if mode.has_low() {
            parts.push(triple.f_low.upsample(4)?);
        }
        if mode.has_mid() {
            parts.push(triple.f_mid.upsample(2)?);
        }
        parts.push(triple.f_high.clone());
        let r = &self.arch.reconstruct;
        let reduced = r.reduce.forward(ctx, &Var::concat(&parts)?)?;
        let blended = r.fbm.forward(ctx, &reduced)?.add(&reduced)?;
        let residual = r.head.forward(ctx, &blended)?;
        residual.add(lr)
    }

    /// Full network on a `[1, N, H, W]` tensor of views ordered `(b, u, v)`.
    pub fn forward_var(&self, ctx: &Ctx<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let triple = self.decompose(ctx, x)?;
        let enhanced = self.branch_interact(ctx, &triple)?;
        self.reconstruct(ctx, &enhanced, x)
    }

    /// Inference on a batch tensor without recording a graph.
    pub fn forward_tensor(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let vars = self.params.vars(false);
        let ctx = Ctx::new(&vars, self.grid());
        Ok(self
            .forward_var(&ctx, &Var::constant(x.clone()))?
            .value()
            .clone())
    }

    /// Replaces parameters with those of `store` after checking names and shapes.
    pub fn load_params(&mut self, store: &ParamStore<T>) -> Result<()> {
        self.params.assign(store)
    }
}

impl OfpNet<f32> {
    /// Super-resolves a Y light field.
    pub fn forward(&self, lf: &LightField) -> Result<LightField> {
        self.check_input(lf)?;
        let x = lightfields_to_tensor::<f32>(&[lf])?;
        let y = self.forward_tensor(&x)?;
        let mut out = tensor_to_lightfields(&y, lf.angular_size())?.remove(0);
        out = out.with_tag(ScaleTag::Sr);
        Ok(out)
    }

    /// Forward over overlapping spatial tiles to bound memory. Each tile is
    /// processed independently and only its interior, at least `overlap` pixels from
    /// any inner edge, is kept. Results match [`forward`](Self::forward)
    /// only approximately near tile seams.
    pub fn forward_tiled(
        &self,
        lf: &LightField,
        tile: usize,
        overlap: usize,
    ) -> Result<LightField> {
        self.check_input(lf)?;
        let (h, w) = lf.spatial_size();
        if tile == 0 || !tile.is_multiple_of(4) {
            return Err(Error::config(format!(
                "tile size {tile} must be a positive multiple of 4"
            )));
        }
        if 2 * overlap >= tile {
            return Err(Error::config(format!(
                "overlap {overlap} leaves no interior in tile {tile}"
            )));
        }
        if tile >= h && tile >= w {
            return self.forward(lf);
        }
        let (th, tw) = (tile.min(h), tile.min(w));
        let ys = tile_spans(h, th, overlap);
        let xs = tile_spans(w, tw, overlap);
        let mut out = Array5::<f32>::zeros(lf.data().dim());
        for &(y0, ya, yb) in &ys {
            for &(x0, xa, xb) in &xs {
                let sr = self.forward(&lf.crop(y0, x0, th, tw)?)?;
                out.slice_mut(ndarray::s![.., .., ya..yb, xa..xb, ..])
                    .assign(&sr.data().slice(ndarray::s![
                        ..,
                        ..,
                        ya - y0..yb - y0,
                        xa - x0..xb - x0,
                        ..
                    ]));
            }
        }
        LightField::new(out, Colorspace::Y, ScaleTag::Sr)
    }

    fn check_input(&self, lf: &LightField) -> Result<()> {
        if lf.colorspace() != Colorspace::Y {
            return Err(Error::Colorspace {
                expected: Colorspace::Y,
                found: lf.colorspace(),
            });
        }
        if lf.angular_size() != self.config.angular_size {
            return Err(Error::size(format!(
                "light field has {:?} views, model expects {:?}",
                lf.angular_size(),
                self.config.angular_size
            )));
        }
        Ok(())
    }
}

/// Window starts along one axis with the span each window writes. Adjacent
/// windows hand over at the middle of their shared region.
fn tile_spans(len: usize, tile: usize, overlap: usize) -> Vec<(usize, usize, usize)> {
    if tile >= len {
        return vec![(0, 0, len)];
    }
    let step = tile - 2 * overlap;
    let mut starts: Vec<usize> = (0..)
        .map(|i| i * step)
        .take_while(|&s| s + tile < len)
        .collect();
    starts.push(len - tile);
    let cuts: Vec<usize> = starts
        .windows(2)
        .map(|w| (w[0] + tile + w[1]) / 2)
        .collect();
    starts
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let a = if i == 0 { 0 } else { cuts[i - 1] };
            let b = cuts.get(i).copied().unwrap_or(len);
            (s, a, b)
        })
        .collect()
}

/// Stacks Y light fields into a `[1, B*U*V, H, W]` tensor.
pub fn lightfields_to_tensor<T: Float>(lfs: &[&LightField]) -> Result<Tensor<T>> {
    let first = lfs.first().ok_or_else(|| Error::size("empty batch"))?;
    let (u, v) = first.angular_size();
    let (h, w) = first.spatial_size();
    let mut data = Vec::with_capacity(lfs.len() * u * v * h * w);
    for lf in lfs {
        if lf.colorspace() != Colorspace::Y {
            return Err(Error::Colorspace {
                expected: Colorspace::Y,
                found: lf.colorspace(),
            });
        }
        if lf.angular_size() != (u, v) || lf.spatial_size() != (h, w) {
            return Err(Error::size("batch members differ in shape"));
        }
        data.extend(lf.as_slice().iter().map(|&x| T::of(x as f64)));
    }
    Tensor::from_vec(&[1, lfs.len() * u * v, h, w], data)
}

/// Splits a `[1, B*U*V, H, W]` tensor back into Y light fields.
pub fn tensor_to_lightfields<T: Float>(
    t: &Tensor<T>,
    angular: (usize, usize),
) -> Result<Vec<LightField>> {
    let [c, n, h, w] = t.dims4()?;
    let views = angular.0 * angular.1;
    if c != 1 || views == 0 || n % views != 0 {
        return Err(Error::size(format!(
            "tensor {:?} is not a batch of {angular:?} Y fields",
            t.shape()
        )));
    }
    let per = views * h * w;
    t.data()
        .chunks(per)
        .map(|chunk| {
            let data = chunk
                .iter()
                .map(|x| x.to_f32().unwrap_or(f32::NAN))
                .collect();
            LightField::from_luma(angular, (h, w), data)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro() -> ModelConfig {
        ModelConfig {
            channels: 2,
            projection_depth_m: 1,
            angular_size: (2, 2),
            fusion_blocks: 1,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn store_matches_closed_form_count() {
        let mut configs = vec![ModelConfig::default(), ModelConfig::desk(), micro()];
        for mode in [BranchMode::MidHigh, BranchMode::HighOnly] {
            configs.push(ModelConfig {
                branch_mode: mode,
                ..micro()
            });
        }
        configs.push(ModelConfig {
            use_fp: false,
            interaction: false,
            padding_blocks: 2,
            ..micro()
        });
        configs.push(ModelConfig {
            share_fp_instances: true,
            ..micro()
        });
        configs.push(ModelConfig {
            share_fp_instances: true,
            use_fp: false,
            ..micro()
        });
        for c in configs {
            let m = OfpNet::<f32>::new(c.clone(), 0).unwrap();
            assert_eq!(m.param_count(), count_params(&c), "{c:?}");
        }
    }

    #[test]
    fn parameter_names_are_unique_and_hierarchical() {
        let m = OfpNet::<f32>::new(ModelConfig::desk(), 0).unwrap();
        let mut names: Vec<_> = m.params().iter().map(|p| p.name.clone()).collect();
        assert!(names.contains(&"decompose.conv_a.weight".to_string()));
        assert!(names.contains(&"fp.high3.fupu1.up.fusion.block0.angular.weight".to_string()));
        assert!(names.contains(&"reconstruct.head.bias".to_string()));
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
    }

    #[test]
    fn shared_instances_reuse_slots() {
        let c = ModelConfig {
            share_fp_instances: true,
            ..micro()
        };
        let m = OfpNet::<f32>::new(c, 0).unwrap();
        assert_eq!(m.arch.slots.len(), 3);
        assert_eq!(m.arch.low, Some(m.arch.high.fp1));
        assert!(m.params().find("fp.fp2.restore.conv.weight").is_some());
    }

    #[test]
    fn fresh_model_is_identity() {
        let m = OfpNet::<f32>::new(micro(), 3).unwrap();
        let lf = LightField::from_fn((2, 2), (8, 12), Colorspace::Y, |u, v, y, x, _| {
            ((u + 2 * v + 3 * y + 5 * x) % 7) as f32 / 7.0
        });
        let sr = m.forward(&lf).unwrap();
        assert_eq!(sr.data(), lf.data());
        assert_eq!(sr.scale_tag(), ScaleTag::Sr);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = OfpNet::<f32>::new(micro(), 0).unwrap();
        let odd = LightField::zeros((2, 2), (6, 8), Colorspace::Y);
        assert!(matches!(m.forward(&odd), Err(Error::Size(_))));
        let views = LightField::zeros((3, 2), (8, 8), Colorspace::Y);
        assert!(matches!(m.forward(&views), Err(Error::Size(_))));
        let rgb = LightField::zeros((2, 2), (8, 8), Colorspace::Rgb);
        assert!(matches!(m.forward(&rgb), Err(Error::Colorspace { .. })));
    }

    #[test]
    fn tiles_cover_every_pixel_once() {
        for (len, tile, overlap) in [(40, 16, 4), (36, 12, 2), (16, 16, 4), (20, 8, 0)] {
            let mut hits = vec![0; len];
            for (s, a, b) in tile_spans(len, tile.min(len), overlap) {
                assert!(s <= a && b <= s + tile.min(len));
                if s > 0 {
                    assert!(a >= s + overlap);
                }
                hits[a..b].iter_mut().for_each(|h| *h += 1);
            }
            assert!(
                hits.iter().all(|&h| h == 1),
                "{len} {tile} {overlap}: {hits:?}"
            );
        }
    }

    #[test]
    fn tiled_forward_keeps_shape_and_equals_identity_when_fresh() {
        let m = OfpNet::<f32>::new(micro(), 1).unwrap();
        let lf = LightField::from_fn((2, 2), (24, 20), Colorspace::Y, |_, _, y, x, _| {
            ((y * x) % 5) as f32 / 5.0
        });
        let sr = m.forward_tiled(&lf, 12, 2).unwrap();
        assert_eq!(sr.data(), lf.data());
    }

    #[test]
    fn tensor_round_trip() {
        let a = LightField::from_fn((2, 3), (4, 4), Colorspace::Y, |u, v, y, x, _| {
            (u * 100 + v * 10 + y * 4 + x) as f32
        });
        let b = LightField::zeros((2, 3), (4, 4), Colorspace::Y);
        let t = lightfields_to_tensor::<f64>(&[&a, &b]).unwrap();
        assert_eq!(t.shape(), &[1, 12, 4, 4]);
        let back = tensor_to_lightfields(&t, (2, 3)).unwrap();
        assert_eq!(back[0].data(), a.data());
        assert_eq!(back[1].data(), b.data());
    }
}
