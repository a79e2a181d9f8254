//! Procedural light fields: textured layers at constant disparity,
//! composited front to back. A layer at disparity `d` shifts by `d` pixels
//! per view step, so it traces a line of slope `d` in every EPI.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lightfield::{Colorspace, LightField};

/// Two visually distinct scene families, used as separate domains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneStyle {
    /// Rectangles with hard-edged stripe and grid textures. Much of the
    /// texture sits above the x4 Nyquist limit and aliases.
    Urban,
    /// Discs with smooth, low-contrast textures.
    #[default]
    Natural,
}

#[derive(Clone, Debug)]
enum Footprint {
    Everywhere,
    Rect { cy: f64, cx: f64, hh: f64, hw: f64 },
    Disc { cy: f64, cx: f64, r: f64 },
}

impl Footprint {
    fn covers(&self, y: f64, x: f64) -> bool {
        match *self {
            Footprint::Everywhere => true,
            Footprint::Rect { cy, cx, hh, hw } => (y - cy).abs() <= hh && (x - cx).abs() <= hw,
            Footprint::Disc { cy, cx, r } => (y - cy).powi(2) + (x - cx).powi(2) <= r * r,
        }
    }
}

#[derive(Clone, Debug)]
struct Wave {
    ky: f64,
    kx: f64,
    phase: f64,
    weight: f64,
    square: bool,
}

#[derive(Clone, Debug)]
struct Layer {
    footprint: Footprint,
    disparity: f64,
    base: [f64; 3],
    tint: [f64; 3],
    waves: Vec<Wave>,
}

impl Layer {
    fn color(&self, y: f64, x: f64) -> [f64; 3] {
        let t: f64 = self
            .waves
            .iter()
            .map(|w| {
                let s = (TAU * (w.ky * y + w.kx * x) + w.phase).sin();
                w.weight * if w.square { s.signum() } else { s }
            })
            .sum();
        std::array::from_fn(|c| (self.base[c] + t * self.tint[c]).clamp(0.0, 1.0))
    }
}

fn random_waves(
    rng: &mut ChaCha8Rng,
    count: usize,
    max_freq: f64,
    square: bool,
    amplitude: f64,
) -> Vec<Wave> {
    (0..count)
        .map(|i| {
            let freq = rng.gen_range(0.04..max_freq);
            let angle = rng.gen_range(0.0..TAU);
            Wave {
                ky: freq * angle.sin(),
                kx: freq * angle.cos(),
                phase: rng.gen_range(0.0..TAU),
                weight: amplitude / (i + 1) as f64,
                square: square && i % 2 == 0,
            }
        })
        .collect()
}

fn random_layers(style: SceneStyle, rng: &mut ChaCha8Rng, spatial: (usize, usize)) -> Vec<Layer> {
    let (h, w) = (spatial.0 as f64, spatial.1 as f64);
    let (max_freq, square, amplitude, count) = match style {
        SceneStyle::Urban => (0.45, true, 0.22, rng.gen_range(4..8)),
        SceneStyle::Natural => (0.2, false, 0.12, rng.gen_range(3..6)),
    };
    let tint =
        |rng: &mut ChaCha8Rng| -> [f64; 3] { std::array::from_fn(|_| rng.gen_range(0.6..1.0)) };
    let mut layers = vec![Layer {
        footprint: Footprint::Everywhere,
        disparity: rng.gen_range(-1.0..-0.2),
        base: std::array::from_fn(|_| rng.gen_range(0.3..0.7)),
        tint: tint(rng),
        waves: random_waves(rng, 4, max_freq, square, amplitude),
    }];
    for _ in 0..count {
        let (cy, cx) = (rng.gen_range(0.0..h), rng.gen_range(0.0..w));
        let size = rng.gen_range(0.1..0.35) * h.min(w);
        let footprint = match style {
            SceneStyle::Urban => Footprint::Rect {
                cy,
                cx,
                hh: size * rng.gen_range(0.5..1.5),
                hw: size * rng.gen_range(0.5..1.5),
            },
            SceneStyle::Natural => Footprint::Disc { cy, cx, r: size },
        };
        layers.push(Layer {
            footprint,
            disparity: rng.gen_range(-0.2..1.2),
            base: std::array::from_fn(|_| rng.gen_range(0.15..0.85)),
            tint: tint(rng),
            waves: random_waves(rng, 3, max_freq, square, amplitude),
        });
    }
    // Nearest (largest disparity) first, so the first hit occludes the rest.
    layers.sort_by(|a, b| b.disparity.total_cmp(&a.disparity));
    layers
}

fn render(
    layers: &[Layer],
    angular: (usize, usize),
    spatial: (usize, usize),
    colorspace: Colorspace,
) -> LightField {
    const SUB: usize = 2;
    let uc = (angular.0 as f64 - 1.0) / 2.0;
    let vc = (angular.1 as f64 - 1.0) / 2.0;
    let mut cache: Option<(usize, usize, usize, usize, [f64; 3])> = None;
    LightField::from_fn(angular, spatial, colorspace, |u, v, y, x, c| {
        let rgb = match cache {
            Some((cu, cv, cy, cx, rgb)) if (cu, cv, cy, cx) == (u, v, y, x) => rgb,
            _ => {
                let mut acc = [0.0; 3];
                for sy in 0..SUB {
                    for sx in 0..SUB {
                        let py = y as f64 + (sy as f64 + 0.5) / SUB as f64;
                        let px = x as f64 + (sx as f64 + 0.5) / SUB as f64;
                        let hit = layers.iter().find_map(|l| {
                            let (ly, lx) = (
                                py - l.disparity * (u as f64 - uc),
                                px - l.disparity * (v as f64 - vc),
                            );
                            l.footprint.covers(ly, lx).then(|| l.color(ly, lx))
                        });
                        let col = hit.unwrap_or([0.0; 3]);
                        for k in 0..3 {
                            acc[k] += col[k] / (SUB * SUB) as f64;
                        }
                    }
                }
                cache = Some((u, v, y, x, acc));
                acc
            }
        };
        match colorspace {
            Colorspace::Y => (0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]) as f32,
            _ => rgb[c] as f32,
        }
    })
}

/// A random RGB scene of layered, textured shapes at assorted disparities.
pub fn synthetic_scene(
    style: SceneStyle,
    seed: u64,
    angular: (usize, usize),
    spatial: (usize, usize),
) -> LightField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = random_layers(style, &mut rng, spatial);
    render(&layers, angular, spatial, Colorspace::Rgb)
}

/// A single textured plane at `disparity` px/view, as a Y field. Its EPIs
/// are families of parallel lines of slope `disparity`.
pub fn uniform_disparity_field(
    angular: (usize, usize),
    spatial: (usize, usize),
    disparity: f64,
    seed: u64,
) -> LightField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = Layer {
        footprint: Footprint::Everywhere,
        disparity,
        base: [0.5; 3],
        tint: [1.0; 3],
        waves: random_waves(&mut rng, 5, 0.3, false, 0.2),
    };
    render(&[layer], angular, spatial, Colorspace::Y)
}
