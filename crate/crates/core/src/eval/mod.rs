//! Y-channel PSNR/SSIM, evaluation over dataset splits, result tables and
//! EPI strip export.

mod metrics;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::datasets::{load_pair, DatasetIndex, Split, SplitManifest};
use crate::error::{Error, Result};
use crate::lightfield::{
    extract_epi, extract_y, merge_luma, save_gray_png, save_lightfield, ycbcr_to_rgb, Colorspace,
    EpiOrientation, LightField,
};
use crate::model::{ModelConfig, OfpNet};

pub use metrics::{psnr_plane, psnr_views, psnr_y, ssim_plane, ssim_views, ssim_y, PSNR_CAP};
pub use report::{
    emit_table, file_label, Aggregate, MetricsReport, SceneMetrics, TableLayout, CONVENTION,
};

/// Vertical magnification of exported EPI strips.
pub const EPI_MAGNIFY: usize = 8;

/// Short stable hash of a model config.
pub fn config_fingerprint(config: &ModelConfig) -> String {
    let json = serde_json::to_string(config).expect("model config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Per-view metrics of one super-resolved scene.
pub fn scene_metrics(sr: &LightField, gt: &LightField) -> Result<SceneMetrics> {
    let to_rows = |a: Array2<f64>| a.outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>();
    Ok(SceneMetrics::new(
        to_rows(psnr_views(sr, gt)?),
        to_rows(ssim_views(sr, gt)?),
    ))
}

#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    /// Spatial tile edge for inference on large scenes; `None` runs whole views.
    pub tile: Option<usize>,
    /// Writes full-RGB results under `<dir>/sr/<scene>/` when set.
    pub sr_dump: Option<PathBuf>,
}

/// Tile overlap used with [`EvalOptions::tile`].
const TILE_OVERLAP: usize = 8;

fn for_each_scene(
    index: &DatasetIndex,
    manifest: &SplitManifest,
    split: Split,
    scale: u32,
    mut f: impl FnMut(&str, &LightField, &LightField) -> Result<LightField>,
) -> Result<BTreeMap<String, SceneMetrics>> {
    let ids = manifest.scenes(split);
    if ids.is_empty() {
        return Err(Error::Split(format!("the {split:?} split is empty")));
    }
    let mut out = BTreeMap::new();
    for id in ids {
        let record = index.get(id).ok_or_else(|| {
            Error::Data(format!("split lists scene {id} which is not in the index"))
        })?;
        let (lr, gt) = load_pair(record, scale, Colorspace::YCbCr)?;
        let gt_y = extract_y(&gt)?;
        let sr_y = f(id, &lr, &gt_y)?;
        out.insert(id.clone(), scene_metrics(&sr_y, &gt_y)?);
    }
    Ok(out)
}

/// Runs `model` on the LR views of every scene in `split` and scores the
/// result against GT on Y. Outputs are clamped to `[0, 1]`.
pub fn evaluate(
    model: &OfpNet<f32>,
    index: &DatasetIndex,
    manifest: &SplitManifest,
    split: Split,
    scale: u32,
    label: &str,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let per_scene = for_each_scene(index, manifest, split, scale, |id, lr, _| {
        let lr_y = extract_y(lr)?;
        let mut sr = match opts.tile {
            Some(tile) => model.forward_tiled(&lr_y, tile, TILE_OVERLAP)?,
            None => model.forward(&lr_y)?,
        };
        sr.clamp_unit();
        if let Some(dir) = &opts.sr_dump {
            let rgb = ycbcr_to_rgb(&merge_luma(&sr, lr)?)?;
            save_lightfield(&rgb, &dir.join("sr").join(id))?;
        }
        Ok(sr)
    })?;
    Ok(MetricsReport::new(
        label,
        config_fingerprint(model.config()),
        scale,
        split,
        per_scene,
    ))
}

/// Scores the LR views themselves against GT.
pub fn identity_baseline(
    index: &DatasetIndex,
    manifest: &SplitManifest,
    split: Split,
    scale: u32,
) -> Result<MetricsReport> {
    let per_scene = for_each_scene(index, manifest, split, scale, |_, lr, _| extract_y(lr))?;
    Ok(MetricsReport::new(
        "identity", "none", scale, split, per_scene,
    ))
}

/// Writes horizontal EPIs `(u, y)` of a Y field as PNGs, each row
/// repeated [`EPI_MAGNIFY`] times, so a `V x W` EPI becomes `8V x W`.
pub fn export_epi_strip(
    lf: &LightField,
    rows: &[(usize, usize)],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    rows.iter()
        .map(|&(u, y)| {
            let epi = extract_epi(lf, EpiOrientation::Horizontal, u, y)?;
            let (vn, w) = epi.data.dim();
            let tall = Array2::from_shape_fn((vn * EPI_MAGNIFY, w), |(r, x)| {
                epi.data[[r / EPI_MAGNIFY, x]]
            });
            let path = out_dir.join(format!("epi_u{u}_y{y}.png"));
            save_gray_png(&tall, &path)?;
            Ok(path)
        })
        .collect()
}
