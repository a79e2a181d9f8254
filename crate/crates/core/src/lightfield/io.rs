//! PNG-per-view storage. View `(u, v)` lives in `view_{u}_{v}.png`, 0-based.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use ndarray::{Array2, Array5};

use super::{extract_y, rgb_to_ycbcr, ycbcr_to_rgb, Colorspace, LightField, ScaleTag};
use crate::error::{Error, Result};

/// Angular grid of LytroZoom-format data.
pub const LYTRO_ANGULAR: (usize, usize) = (5, 5);

pub fn view_file_name(u: usize, v: usize) -> String {
    format!("view_{u}_{v}.png")
}

/// Loads a 5x5 light field; see [`load_lightfield_with`].
pub fn load_lightfield(dir: &Path, colorspace: Colorspace) -> Result<LightField> {
    load_lightfield_with(dir, LYTRO_ANGULAR, colorspace)
}

/// Loads `U x V` 8-bit views from `dir` and converts them to `colorspace`.
pub fn load_lightfield_with(
    dir: &Path,
    angular: (usize, usize),
    colorspace: Colorspace,
) -> Result<LightField> {
    let (u_n, v_n) = angular;
    let mut data: Option<Array5<f32>> = None;
    for u in 0..u_n {
        for v in 0..v_n {
            let path = dir.join(view_file_name(u, v));
            if !path.is_file() {
                return Err(Error::MissingView {
                    u,
                    v,
                    dir: dir.to_path_buf(),
                });
            }
            let img = image::open(&path)?.to_rgb8();
            let (w, h) = (img.width() as usize, img.height() as usize);
            let buf = data.get_or_insert_with(|| Array5::zeros((u_n, v_n, h, w, 3)));
            let (_, _, eh, ew, _) = buf.dim();
            if (eh, ew) != (h, w) {
                return Err(Error::InconsistentViews(format!(
                    "{} is {w}x{h}, expected {ew}x{eh}",
                    path.display()
                )));
            }
            for (x, y, px) in img.enumerate_pixels() {
                for c in 0..3 {
                    buf[[u, v, y as usize, x as usize, c]] = px.0[c] as f32 / 255.0;
                }
            }
        }
    }
    let data = data.ok_or_else(|| Error::size("angular size must be at least 1x1"))?;
    let rgb = LightField::new(data, Colorspace::Rgb, ScaleTag::Gt)?;
    match colorspace {
        Colorspace::Rgb => Ok(rgb),
        Colorspace::YCbCr => rgb_to_ycbcr(&rgb),
        Colorspace::Y => extract_y(&rgb_to_ycbcr(&rgb)?),
    }
}

fn to_u8(x: f32) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes every view as an 8-bit PNG, clamping to `[0, 1]`. RGB and YCbCr
/// fields are stored as RGB, Y fields as grayscale.
pub fn save_lightfield(lf: &LightField, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let rgb;
    let lf = if lf.colorspace() == Colorspace::YCbCr {
        rgb = ycbcr_to_rgb(lf)?;
        &rgb
    } else {
        lf
    };
    let (u_n, v_n) = lf.angular_size();
    let (h, w) = lf.spatial_size();
    for u in 0..u_n {
        for v in 0..v_n {
            let view = lf.view(u, v);
            let path = dir.join(view_file_name(u, v));
            match lf.colorspace() {
                Colorspace::Y => {
                    let img: GrayImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
                        Luma([to_u8(view[[y as usize, x as usize, 0]])])
                    });
                    img.save(&path)?;
                }
                _ => {
                    let img: RgbImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
                        let p = |c| to_u8(view[[y as usize, x as usize, c]]);
                        Rgb([p(0), p(1), p(2)])
                    });
                    img.save(&path)?;
                }
            }
        }
    }
    Ok(())
}

pub fn save_gray_png(img: &Array2<f32>, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let (h, w) = img.dim();
    let out: GrayImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Luma([to_u8(img[[y as usize, x as usize]])])
    });
    out.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_views(
        dir: &Path,
        angular: (usize, usize),
        size: (u32, u32),
        skip: Option<(usize, usize)>,
    ) {
        for u in 0..angular.0 {
            for v in 0..angular.1 {
                if Some((u, v)) == skip {
                    continue;
                }
                let img: RgbImage = ImageBuffer::from_fn(size.0, size.1, |x, y| {
                    Rgb([(x * 3 + u as u32) as u8, (y * 5 + v as u32) as u8, 128])
                });
                img.save(dir.join(view_file_name(u, v))).unwrap();
            }
        }
    }

    #[test]
    fn loads_lytro_p_and_o_shapes() {
        let tmp = tempfile::tempdir().unwrap();
        write_views(tmp.path(), (5, 5), (456, 320), None);
        let lf = load_lightfield(tmp.path(), Colorspace::Rgb).unwrap();
        assert_eq!(lf.data().dim(), (5, 5, 320, 456, 3));
        assert_eq!(lf.data()[[2, 3, 4, 10, 0]], (10 * 3 + 2) as f32 / 255.0);
        assert_eq!(lf.data()[[2, 3, 4, 10, 1]], (4 * 5 + 3) as f32 / 255.0);

        let tmp = tempfile::tempdir().unwrap();
        write_views(tmp.path(), (5, 5), (608, 416), None);
        let lf = load_lightfield(tmp.path(), Colorspace::Y).unwrap();
        assert_eq!(lf.data().dim(), (5, 5, 416, 608, 1));
    }

    #[test]
    fn missing_view_is_named() {
        let tmp = tempfile::tempdir().unwrap();
        write_views(tmp.path(), (5, 5), (8, 8), Some((2, 3)));
        match load_lightfield(tmp.path(), Colorspace::Rgb) {
            Err(Error::MissingView { u: 2, v: 3, .. }) => {}
            other => panic!("expected MissingView(2,3), got {other:?}"),
        }
    }

    #[test]
    fn mismatched_view_sizes_are_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        write_views(tmp.path(), (2, 2), (8, 8), None);
        let odd: RgbImage = ImageBuffer::new(9, 8);
        odd.save(tmp.path().join(view_file_name(1, 1))).unwrap();
        assert!(matches!(
            load_lightfield_with(tmp.path(), (2, 2), Colorspace::Rgb),
            Err(Error::InconsistentViews(_))
        ));
    }

    #[test]
    fn save_then_load_round_trips_8bit_values() {
        let tmp = tempfile::tempdir().unwrap();
        let lf = LightField::from_fn((2, 3), (4, 6), Colorspace::Rgb, |u, v, y, x, c| {
            ((u * 31 + v * 17 + y * 7 + x * 3 + c * 50) % 256) as f32 / 255.0
        });
        save_lightfield(&lf, tmp.path()).unwrap();
        let back = load_lightfield_with(tmp.path(), (2, 3), Colorspace::Rgb).unwrap();
        assert_eq!(back, lf);
    }
}
