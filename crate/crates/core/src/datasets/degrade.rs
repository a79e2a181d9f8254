use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightfield::{reflect, resize_plane, LightField, ScaleTag};

/// One resolution-preserving degradation step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Degradation {
    /// Bicubic downscale by `factor`, then bicubic upscale back.
    BicubicDownUp {
        factor: u32,
    },
    GaussianBlur {
        sigma: f64,
    },
    GaussianNoise {
        sigma: f64,
    },
    /// Quantizes 8x8 block DCT coefficients; the DC term is kept.
    JpegLikeSmoothing {
        strength: f64,
    },
}

/// Ordered degradation steps applied after the scale step of
/// [`generate_synthetic_pair`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DegradationChain {
    pub steps: Vec<Degradation>,
    pub seed: u64,
    /// Relative per-view spread of blur, noise and smoothing strengths.
    /// Zero applies identical parameters to every view.
    #[serde(default)]
    pub jitter: f64,
}

impl DegradationChain {
    /// Parses a comma-separated step list such as `bicubic,blur:0.8,noise:0.01`.
    ///
    /// `bicubic` names the scale step, which every pair already gets, and
    /// adds nothing; `bicubic:F` adds another down-up pass by `F`.
    /// `blur:S`, `noise:S` and `jpeg:S` take a sigma or strength.
    pub fn parse(spec: &str, seed: u64) -> Result<Self> {
        let mut steps = Vec::new();
        for token in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (name, arg) = match token.split_once(':') {
                Some((n, a)) => (n, Some(a)),
                None => (token, None),
            };
            let value = |what: &str| -> Result<f64> {
                let raw = arg.ok_or_else(|| {
                    Error::config(format!(
                        "chain step {name} needs a {what}, as {name}:<{what}>"
                    ))
                })?;
                let v: f64 = raw.parse().map_err(|_| {
                    Error::config(format!("chain step {token}: {raw:?} is not a number"))
                })?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::config(format!(
                        "chain step {token}: {what} must be non-negative"
                    )));
                }
                Ok(v)
            };
            match name {
                "bicubic" => {
                    if let Some(raw) = arg {
                        let factor = raw.parse().map_err(|_| {
                            Error::config(format!("chain step {token}: bad factor {raw:?}"))
                        })?;
                        steps.push(Degradation::BicubicDownUp { factor });
                    }
                }
                "blur" => steps.push(Degradation::GaussianBlur {
                    sigma: value("sigma")?,
                }),
                "noise" => steps.push(Degradation::GaussianNoise {
                    sigma: value("sigma")?,
                }),
                "jpeg" => steps.push(Degradation::JpegLikeSmoothing {
                    strength: value("strength")?,
                }),
                other => {
                    return Err(Error::config(format!(
                        "unknown chain step {other:?}; expected bicubic, blur, noise or jpeg"
                    )))
                }
            }
        }
        Ok(Self {
            steps,
            seed,
            jitter: 0.0,
        })
    }

    /// Applies every step to every view and channel, then clamps to `[0, 1]`.
    pub fn apply(&self, lf: &LightField) -> Result<LightField> {
        let mut out = lf.clone();
        let (u_n, v_n) = lf.angular_size();
        let mut noise_rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut jitter_rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x6a09_e667_f3bc_c908);
        for step in &self.steps {
            for u in 0..u_n {
                for v in 0..v_n {
                    let scale = if self.jitter > 0.0 {
                        1.0 + self.jitter * jitter_rng.gen_range(-1.0..1.0)
                    } else {
                        1.0
                    };
                    for c in 0..lf.channels() {
                        let plane = out.plane(u, v, c).to_owned();
                        let next = apply_step(step, &plane, scale, &mut noise_rng)?;
                        out.data_mut().slice_mut(s![u, v, .., .., c]).assign(&next);
                    }
                }
            }
        }
        out.clamp_unit();
        Ok(out)
    }
}

fn apply_step(
    step: &Degradation,
    plane: &Array2<f32>,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<f32>> {
    Ok(match *step {
        Degradation::BicubicDownUp { factor } => down_up(plane, factor)?,
        Degradation::GaussianBlur { sigma } => gaussian_blur(plane, sigma * scale),
        Degradation::GaussianNoise { sigma } => {
            let sigma = sigma * scale;
            if sigma == 0.0 {
                plane.clone()
            } else {
                let normal = Normal::new(0.0, sigma).map_err(|e| Error::config(e.to_string()))?;
                plane.mapv(|x| (x as f64 + normal.sample(rng)) as f32)
            }
        }
        Degradation::JpegLikeSmoothing { strength } => jpeg_like(plane, strength * scale),
    })
}

fn down_up(plane: &Array2<f32>, factor: u32) -> Result<Array2<f32>> {
    let f = factor as usize;
    let (h, w) = plane.dim();
    if f == 0 || h % f != 0 || w % f != 0 {
        return Err(Error::size(format!(
            "{h}x{w} views are not divisible by scale {factor}"
        )));
    }
    if f == 1 {
        return Ok(plane.clone());
    }
    let small = resize_plane(plane.view(), h / f, w / f);
    Ok(resize_plane(small.view(), h, w))
}

fn gaussian_blur(plane: &Array2<f32>, sigma: f64) -> Array2<f32> {
    if sigma <= 0.0 {
        return plane.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|t| t / total).collect();
    let (h, w) = plane.dim();
    let pass = |src: &Array2<f32>, horizontal: bool| {
        Array2::from_shape_fn((h, w), |(y, x)| {
            let acc: f64 = taps
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    let k = i as i64 - radius;
                    let px = if horizontal {
                        src[[y, reflect(x as i64 + k, w)]]
                    } else {
                        src[[reflect(y as i64 + k, h), x]]
                    };
                    t * px as f64
                })
                .sum();
            acc as f32
        })
    };
    pass(&pass(plane, true), false)
}

const BLOCK: usize = 8;

/// Orthonormal 8-point DCT-II basis, `basis[k][n]`.
fn dct_basis() -> [[f64; BLOCK]; BLOCK] {
    let mut b = [[0.0; BLOCK]; BLOCK];
    for (k, row) in b.iter_mut().enumerate() {
        let norm = if k == 0 {
            (1.0 / BLOCK as f64).sqrt()
        } else {
            (2.0 / BLOCK as f64).sqrt()
        };
        for (n, x) in row.iter_mut().enumerate() {
            *x = norm
                * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / (2 * BLOCK) as f64).cos();
        }
    }
    b
}

/// Block-DCT quantization. Coefficient `(ky, kx)` is truncated toward zero
/// to a multiple of `strength * (1 + ky + kx) / 16`, so no coefficient
/// grows; the DC term is untouched. Partial blocks at the right and bottom
/// edges are reflected to full size.
fn jpeg_like(plane: &Array2<f32>, strength: f64) -> Array2<f32> {
    if strength <= 0.0 {
        return plane.clone();
    }
    let basis = dct_basis();
    let (h, w) = plane.dim();
    let mut out = plane.clone();
    for by in (0..h).step_by(BLOCK) {
        for bx in (0..w).step_by(BLOCK) {
            let mut block = [[0.0f64; BLOCK]; BLOCK];
            for (i, row) in block.iter_mut().enumerate() {
                for (j, x) in row.iter_mut().enumerate() {
                    *x = plane[[reflect((by + i) as i64, h), reflect((bx + j) as i64, w)]] as f64;
                }
            }
            let mut coef = [[0.0f64; BLOCK]; BLOCK];
            for ky in 0..BLOCK {
                for kx in 0..BLOCK {
                    let mut acc = 0.0;
                    for (i, row) in block.iter().enumerate() {
                        for (j, &x) in row.iter().enumerate() {
                            acc += basis[ky][i] * basis[kx][j] * x;
                        }
                    }
                    coef[ky][kx] = if ky + kx == 0 {
                        acc
                    } else {
                        let q = strength * (1 + ky + kx) as f64 / 16.0;
                        (acc / q).trunc() * q
                    };
                }
            }
            for i in 0..BLOCK.min(h - by) {
                for j in 0..BLOCK.min(w - bx) {
                    let mut acc = 0.0;
                    for (ky, crow) in coef.iter().enumerate() {
                        for (kx, &c) in crow.iter().enumerate() {
                            acc += basis[ky][i] * basis[kx][j] * c;
                        }
                    }
                    out[[by + i, bx + j]] = acc as f32;
                }
            }
        }
    }
    out
}

/// Fabricates a paired LR field at the resolution of `hr`: a bicubic
/// down-up pass by `scale`, then `chain`. Scale 1 skips the resampling.
pub fn generate_synthetic_pair(
    hr: &LightField,
    scale: u32,
    chain: &DegradationChain,
) -> Result<(LightField, LightField)> {
    let (h, w) = hr.spatial_size();
    let f = scale as usize;
    if f == 0 || h % f != 0 || w % f != 0 {
        return Err(Error::size(format!(
            "{h}x{w} light field is not divisible by scale {scale}"
        )));
    }
    let mut steps = Vec::with_capacity(chain.steps.len() + 1);
    if scale > 1 {
        steps.push(Degradation::BicubicDownUp { factor: scale });
    }
    steps.extend(chain.steps.iter().cloned());
    let full = DegradationChain {
        steps,
        seed: chain.seed,
        jitter: chain.jitter,
    };
    let mut lr = full.apply(hr)?;
    if scale > 1 {
        lr = lr.with_tag(ScaleTag::for_scale(scale)?);
    }
    Ok((lr, hr.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::Colorspace;

    fn textured(h: usize, w: usize) -> LightField {
        LightField::from_fn((3, 3), (h, w), Colorspace::Rgb, |u, v, y, x, c| {
            (((u * 7 + v * 5 + y * 3 + x + c) % 13) as f32 / 13.0) * 0.8 + 0.1
        })
    }

    #[test]
    fn parse_builds_steps() {
        let chain =
            DegradationChain::parse("bicubic, blur:0.8,noise:0.01,jpeg:0.2,bicubic:2", 3).unwrap();
        assert_eq!(
            chain.steps,
            vec![
                Degradation::GaussianBlur { sigma: 0.8 },
                Degradation::GaussianNoise { sigma: 0.01 },
                Degradation::JpegLikeSmoothing { strength: 0.2 },
                Degradation::BicubicDownUp { factor: 2 },
            ]
        );
        assert!(DegradationChain::parse("blur", 0).is_err());
        assert!(DegradationChain::parse("sharpen:1", 0).is_err());
        assert!(DegradationChain::parse("noise:-1", 0).is_err());
        assert!(DegradationChain::parse("", 0).unwrap().steps.is_empty());
    }

    #[test]
    fn constant_field_survives_noise_free_chains() {
        let lf = LightField::from_fn((2, 2), (16, 16), Colorspace::Rgb, |_, _, _, _, c| {
            0.2 + 0.3 * c as f32
        });
        let chain = DegradationChain::parse("blur:1.2,jpeg:0.5,bicubic:2", 0).unwrap();
        let (lr, _) = generate_synthetic_pair(&lf, 4, &chain).unwrap();
        for ((_, _, _, _, c), &x) in lr.data().indexed_iter() {
            assert!((x - (0.2 + 0.3 * c as f32)).abs() < 1e-6);
        }
    }

    #[test]
    fn scale_one_with_empty_chain_is_identity() {
        let lf = textured(8, 8);
        let (lr, hr) = generate_synthetic_pair(&lf, 1, &DegradationChain::default()).unwrap();
        assert_eq!(lr, lf);
        assert_eq!(hr, lf);
    }

    #[test]
    fn shapes_are_preserved_and_indivisible_sizes_rejected() {
        let lf = textured(12, 8);
        let chain = DegradationChain::parse("blur:0.5,noise:0.02,jpeg:0.1", 9).unwrap();
        let (lr, _) = generate_synthetic_pair(&lf, 4, &chain).unwrap();
        assert_eq!(lr.data().dim(), lf.data().dim());
        assert!(matches!(
            generate_synthetic_pair(&textured(10, 8), 4, &chain),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let lf = textured(8, 8);
        let chain = DegradationChain::parse("noise:0.05", 4).unwrap();
        let a = chain.apply(&lf).unwrap();
        assert_eq!(a, chain.apply(&lf).unwrap());
        let other = DegradationChain { seed: 5, ..chain };
        assert_ne!(a, other.apply(&lf).unwrap());
    }

    #[test]
    fn jitter_varies_views_only_when_enabled() {
        let lf = LightField::from_fn((1, 2), (16, 16), Colorspace::Y, |_, _, y, x, _| {
            ((y * 5 + x * 3) % 7) as f32 / 7.0
        });
        let mut chain = DegradationChain::parse("blur:1.0", 2).unwrap();
        let same = chain.apply(&lf).unwrap();
        assert_eq!(same.view(0, 0), same.view(0, 1));
        chain.jitter = 0.5;
        let varied = chain.apply(&lf).unwrap();
        assert_ne!(varied.view(0, 0), varied.view(0, 1));
    }

    #[test]
    fn dct_basis_is_orthonormal() {
        let b = dct_basis();
        for i in 0..BLOCK {
            for j in 0..BLOCK {
                let d: f64 = (0..BLOCK).map(|n| b[i][n] * b[j][n]).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jpeg_like_removes_high_frequency_energy() {
        let plane =
            Array2::from_shape_fn((16, 16), |(y, x)| if (x + y) % 2 == 0 { 0.8 } else { 0.2 });
        let out = jpeg_like(&plane, 4.0);
        let energy = |a: &Array2<f32>| a.iter().map(|&x| (x - 0.5).powi(2)).sum::<f32>();
        assert!(energy(&out) < 0.5 * energy(&plane));
        assert_eq!(jpeg_like(&plane, 0.0), plane);
    }
}
