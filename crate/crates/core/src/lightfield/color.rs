//! BT.601 full-range YCbCr, with chroma offset to 0.5 so every channel
//! stays in `[0, 1]`.

use ndarray::{s, Array5, Axis, Zip};

use super::{Colorspace, LightField};
use crate::error::{Error, Result};

const KR: f32 = 0.299;
const KG: f32 = 0.587;
const KB: f32 = 0.114;

fn require(lf: &LightField, expected: Colorspace) -> Result<()> {
    if lf.colorspace() != expected {
        return Err(Error::Colorspace {
            expected,
            found: lf.colorspace(),
        });
    }
    Ok(())
}

pub fn rgb_to_ycbcr(lf: &LightField) -> Result<LightField> {
    require(lf, Colorspace::Rgb)?;
    let mut out = lf.data().clone();
    Zip::from(out.lanes_mut(Axis(4))).for_each(|mut px| {
        let (r, g, b) = (px[0], px[1], px[2]);
        let y = KR * r + KG * g + KB * b;
        px[0] = y;
        px[1] = 0.5 + (b - y) / (2.0 * (1.0 - KB));
        px[2] = 0.5 + (r - y) / (2.0 * (1.0 - KR));
    });
    LightField::new(out, Colorspace::YCbCr, lf.scale_tag())
}

pub fn ycbcr_to_rgb(lf: &LightField) -> Result<LightField> {
    require(lf, Colorspace::YCbCr)?;
    let mut out = lf.data().clone();
    Zip::from(out.lanes_mut(Axis(4))).for_each(|mut px| {
        let (y, cb, cr) = (px[0], px[1] - 0.5, px[2] - 0.5);
        let r = y + 2.0 * (1.0 - KR) * cr;
        let b = y + 2.0 * (1.0 - KB) * cb;
        let g = (y - KR * r - KB * b) / KG;
        px[0] = r;
        px[1] = g;
        px[2] = b;
    });
    LightField::new(out, Colorspace::Rgb, lf.scale_tag())
}

pub fn extract_y(lf: &LightField) -> Result<LightField> {
    require(lf, Colorspace::YCbCr)?;
    let y = lf.data().slice(s![.., .., .., .., 0..1]).to_owned();
    LightField::new(y, Colorspace::Y, lf.scale_tag())
}

/// Replaces the luma of `chroma_source` (YCbCr) with `luma` (Y).
pub fn merge_luma(luma: &LightField, chroma_source: &LightField) -> Result<LightField> {
    require(luma, Colorspace::Y)?;
    require(chroma_source, Colorspace::YCbCr)?;
    if luma.angular_size() != chroma_source.angular_size()
        || luma.spatial_size() != chroma_source.spatial_size()
    {
        return Err(Error::size("luma and chroma fields differ in shape"));
    }
    let mut out: Array5<f32> = chroma_source.data().clone();
    out.slice_mut(s![.., .., .., .., 0..1]).assign(luma.data());
    LightField::new(out, Colorspace::YCbCr, luma.scale_tag())
}
