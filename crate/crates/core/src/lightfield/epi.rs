use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::{Colorspace, LightField};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpiOrientation {
    /// Fixed `u` and row `y`; rows of the EPI run over `v`, columns over `x`.
    Horizontal,
    /// Fixed `v` and column `x`; rows run over `u`, columns over `y`.
    Vertical,
}

/// An epipolar plane image. Scene depth shows up as line slope.
#[derive(Clone, Debug, PartialEq)]
pub struct EpiImage {
    pub data: Array2<f32>,
    pub orientation: EpiOrientation,
    pub view_index: usize,
    pub line_index: usize,
}

/// Slices an EPI out of a single-channel (Y) light field.
///
/// A horizontal EPI is `V x W`; a vertical one is `U x H`.
pub fn extract_epi(
    lf: &LightField,
    orientation: EpiOrientation,
    view_index: usize,
    line_index: usize,
) -> Result<EpiImage> {
    if lf.colorspace() != Colorspace::Y {
        return Err(Error::Colorspace {
            expected: Colorspace::Y,
            found: lf.colorspace(),
        });
    }
    let (u_n, v_n) = lf.angular_size();
    let (h, w) = lf.spatial_size();
    let data = match orientation {
        EpiOrientation::Horizontal => {
            if view_index >= u_n || line_index >= h {
                return Err(Error::bounds(format!(
                    "horizontal EPI (u={view_index}, y={line_index}) outside {u_n} views x {h} rows"
                )));
            }
            lf.data()
                .slice(s![view_index, .., line_index, .., 0])
                .to_owned()
        }
        EpiOrientation::Vertical => {
            if view_index >= v_n || line_index >= w {
                return Err(Error::bounds(format!(
                    "vertical EPI (v={view_index}, x={line_index}) outside {v_n} views x {w} columns"
                )));
            }
            lf.data()
                .slice(s![.., view_index, .., line_index, 0])
                .to_owned()
        }
    };
    Ok(EpiImage {
        data,
        orientation,
        view_index,
        line_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lytro_sized_horizontal_epi() {
        let lf = LightField::zeros((5, 5), (320, 456), Colorspace::Y);
        let epi = extract_epi(&lf, EpiOrientation::Horizontal, 2, 100).unwrap();
        assert_eq!(epi.data.dim(), (5, 456));
    }

    #[test]
    fn shapes_hold_for_every_valid_index() {
        let lf = LightField::from_fn((5, 5), (16, 16), Colorspace::Y, |u, v, y, x, _| {
            (u * 7 + v * 5 + y * 3 + x) as f32
        });
        for view in 0..5 {
            for line in 0..16 {
                let h = extract_epi(&lf, EpiOrientation::Horizontal, view, line).unwrap();
                assert_eq!(h.data.dim(), (5, 16));
                assert_eq!(h.data[[3, 9]], lf.data()[[view, 3, line, 9, 0]]);
                let v = extract_epi(&lf, EpiOrientation::Vertical, view, line).unwrap();
                assert_eq!(v.data.dim(), (5, 16));
                assert_eq!(v.data[[3, 9]], lf.data()[[3, view, 9, line, 0]]);
            }
        }
        assert!(extract_epi(&lf, EpiOrientation::Horizontal, 5, 0).is_err());
        assert!(extract_epi(&lf, EpiOrientation::Vertical, 0, 16).is_err());
    }

    #[test]
    fn constant_field_gives_constant_epi() {
        let lf = LightField::from_fn((5, 5), (8, 8), Colorspace::Y, |_, _, _, _, _| 0.4);
        let epi = extract_epi(&lf, EpiOrientation::Vertical, 1, 2).unwrap();
        assert!(epi.data.iter().all(|&x| x == 0.4));
    }

    #[test]
    fn needs_single_channel_input() {
        let lf = LightField::zeros((5, 5), (8, 8), Colorspace::Rgb);
        assert!(matches!(
            extract_epi(&lf, EpiOrientation::Horizontal, 0, 0),
            Err(Error::Colorspace { .. })
        ));
    }
}
