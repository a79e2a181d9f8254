//! Light-field representation and the pixel-level operations built on it:
//! color conversion, bicubic resampling, patch cropping, EPI slicing and
//! PNG I/O.
//!
//! A [`LightField`] stores a `U x V` grid of sub-aperture views as one
//! five-dimensional array indexed `(u, v, y, x, c)`. Sample values live in
//! `[0, 1]`; conversion to 8 bits happens only at file boundaries.

mod color;
mod epi;
mod io;
mod resample;

use ndarray::{s, Array5, ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use color::{extract_y, merge_luma, rgb_to_ycbcr, ycbcr_to_rgb};
pub use epi::{extract_epi, EpiImage, EpiOrientation};
pub use io::{
    load_lightfield, load_lightfield_with, save_gray_png, save_lightfield, view_file_name,
    LYTRO_ANGULAR,
};
pub(crate) use resample::reflect;
pub use resample::{bicubic_resize, cubic_kernel, resize_plane};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colorspace {
    Rgb,
    YCbCr,
    Y,
}

impl Colorspace {
    pub fn channels(self) -> usize {
        match self {
            Colorspace::Rgb | Colorspace::YCbCr => 3,
            Colorspace::Y => 1,
        }
    }
}

/// Which member of a paired dataset a light field came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScaleTag {
    #[serde(rename = "gt")]
    Gt,
    #[serde(rename = "lr_x2")]
    LrX2,
    #[serde(rename = "lr_x4")]
    LrX4,
    #[serde(rename = "sr")]
    Sr,
}

impl ScaleTag {
    /// LR tag for an integer scale factor.
    pub fn for_scale(scale: u32) -> Result<Self> {
        match scale {
            2 => Ok(ScaleTag::LrX2),
            4 => Ok(ScaleTag::LrX4),
            other => Err(Error::config(format!(
                "unsupported scale x{other}; expected 2 or 4"
            ))),
        }
    }

    /// Directory name inside a scene folder.
    pub fn dir_name(self) -> &'static str {
        match self {
            ScaleTag::Gt => "gt",
            ScaleTag::LrX2 => "lr_x2",
            ScaleTag::LrX4 => "lr_x4",
            ScaleTag::Sr => "sr",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LightField {
    data: Array5<f32>,
    colorspace: Colorspace,
    scale_tag: ScaleTag,
}

impl LightField {
    /// Wraps a `(u, v, y, x, c)` array. The channel axis must match the
    /// colorspace.
    pub fn new(data: Array5<f32>, colorspace: Colorspace, scale_tag: ScaleTag) -> Result<Self> {
        let (u, v, h, w, c) = data.dim();
        if u == 0 || v == 0 || h == 0 || w == 0 {
            return Err(Error::size(format!("empty light field {:?}", data.dim())));
        }
        if c != colorspace.channels() {
            return Err(Error::size(format!(
                "{colorspace:?} needs {} channels, got {c}",
                colorspace.channels()
            )));
        }
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().into_owned()
        };
        Ok(Self {
            data,
            colorspace,
            scale_tag,
        })
    }

    pub fn zeros(angular: (usize, usize), spatial: (usize, usize), colorspace: Colorspace) -> Self {
        let dim = (
            angular.0,
            angular.1,
            spatial.0,
            spatial.1,
            colorspace.channels(),
        );
        Self {
            data: Array5::zeros(dim),
            colorspace,
            scale_tag: ScaleTag::Gt,
        }
    }

    pub fn from_fn<F>(
        angular: (usize, usize),
        spatial: (usize, usize),
        colorspace: Colorspace,
        mut f: F,
    ) -> Self
    where
        F: FnMut(usize, usize, usize, usize, usize) -> f32,
    {
        let dim = (
            angular.0,
            angular.1,
            spatial.0,
            spatial.1,
            colorspace.channels(),
        );
        let data = Array5::from_shape_fn(dim, |(u, v, y, x, c)| f(u, v, y, x, c));
        Self {
            data,
            colorspace,
            scale_tag: ScaleTag::Gt,
        }
    }

    /// Single-channel luma field from a flat `(u, v, y, x)` buffer.
    pub fn from_luma(
        angular: (usize, usize),
        spatial: (usize, usize),
        values: Vec<f32>,
    ) -> Result<Self> {
        let dim = (angular.0, angular.1, spatial.0, spatial.1, 1);
        let data = Array5::from_shape_vec(dim, values)
            .map_err(|e| Error::size(format!("luma buffer does not match {dim:?}: {e}")))?;
        Self::new(data, Colorspace::Y, ScaleTag::Gt)
    }

    pub fn with_tag(mut self, tag: ScaleTag) -> Self {
        self.scale_tag = tag;
        self
    }

    pub fn angular_size(&self) -> (usize, usize) {
        let d = self.data.dim();
        (d.0, d.1)
    }

    pub fn spatial_size(&self) -> (usize, usize) {
        let d = self.data.dim();
        (d.2, d.3)
    }

    pub fn channels(&self) -> usize {
        self.data.dim().4
    }

    pub fn colorspace(&self) -> Colorspace {
        self.colorspace
    }

    pub fn scale_tag(&self) -> ScaleTag {
        self.scale_tag
    }

    pub fn data(&self) -> &Array5<f32> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array5<f32> {
        &mut self.data
    }

    pub fn into_data(self) -> Array5<f32> {
        self.data
    }

    /// Samples in `(u, v, y, x, c)` row-major order.
    pub fn as_slice(&self) -> &[f32] {
        self.data
            .as_slice()
            .expect("light field data is kept in standard layout")
    }

    pub fn view(&self, u: usize, v: usize) -> ArrayView3<'_, f32> {
        self.data.slice(s![u, v, .., .., ..])
    }

    pub fn plane(&self, u: usize, v: usize, c: usize) -> ArrayView2<'_, f32> {
        self.data.slice(s![u, v, .., .., c])
    }

    /// Same colorspace and tag, new samples.
    pub(crate) fn with_data(&self, data: Array5<f32>) -> Self {
        debug_assert_eq!(data.dim().4, self.channels());
        Self {
            data,
            colorspace: self.colorspace,
            scale_tag: self.scale_tag,
        }
    }

    pub fn clamp_unit(&mut self) {
        self.data.mapv_inplace(|x| x.clamp(0.0, 1.0));
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Crops every view at the same spatial window.
    pub fn extract_patch(&self, y0: usize, x0: usize, size: usize) -> Result<Self> {
        self.crop(y0, x0, size, size)
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Self> {
        let (h, w) = self.spatial_size();
        if height == 0 || width == 0 || y0 + height > h || x0 + width > w {
            return Err(Error::bounds(format!(
                "window {height}x{width} at ({y0}, {x0}) exceeds {h}x{w}"
            )));
        }
        let data = self
            .data
            .slice(s![.., .., y0..y0 + height, x0..x0 + width, ..])
            .to_owned();
        Ok(self.with_data(data))
    }

    /// Largest crop from the origin whose sides are multiples of `m`.
    pub fn crop_to_multiple(&self, m: usize) -> Result<Self> {
        let (h, w) = self.spatial_size();
        let (ch, cw) = (h / m * m, w / m * m);
        if (ch, cw) == (h, w) {
            return Ok(self.clone());
        }
        self.crop(0, 0, ch, cw)
    }
}
