//! Separable bicubic resampling (Keys kernel, a = -0.5).
//!
//! Pixel centers sit at half-integer positions. When shrinking, the kernel
//! is stretched by the inverse scale so it also acts as the anti-aliasing
//! prefilter. Borders use half-sample symmetric reflection and every
//! output's weights are normalized to sum to one.

use ndarray::{Array2, Array5, ArrayView2};

use super::LightField;
use crate::error::{Error, Result};

const A: f64 = -0.5;

pub fn cubic_kernel(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

pub(crate) fn reflect(index: i64, len: usize) -> usize {
    let n = len as i64;
    let m = index.rem_euclid(2 * n);
    (if m >= n { 2 * n - 1 - m } else { m }) as usize
}

/// Per output position, the `(input index, weight)` pairs contributing to it.
fn contributions(in_len: usize, out_len: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = out_len as f64 / in_len as f64;
    let kscale = scale.min(1.0);
    let support = 2.0 / kscale;
    (0..out_len)
        .map(|i| {
            let center = (i as f64 + 0.5) / scale - 0.5;
            let lo = (center - support).floor() as i64;
            let hi = (center + support).ceil() as i64;
            let mut taps: Vec<(usize, f64)> = (lo..=hi)
                .filter_map(|j| {
                    let w = kscale * cubic_kernel(kscale * (center - j as f64));
                    (w != 0.0).then(|| (reflect(j, in_len), w))
                })
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

/// Resizes one image plane to `out_h x out_w`.
pub fn resize_plane(src: ArrayView2<'_, f32>, out_h: usize, out_w: usize) -> Array2<f32> {
    let (h, w) = src.dim();
    let rows = contributions(h, out_h);
    let cols = contributions(w, out_w);

    // Horizontal pass first: h x out_w.
    let mut tmp = Array2::<f32>::zeros((h, out_w));
    for y in 0..h {
        let line = src.row(y);
        for (x, taps) in cols.iter().enumerate() {
            let acc: f64 = taps.iter().map(|&(j, wt)| wt * line[j] as f64).sum();
            tmp[[y, x]] = acc as f32;
        }
    }
    let mut out = Array2::<f32>::zeros((out_h, out_w));
    for (y, taps) in rows.iter().enumerate() {
        for x in 0..out_w {
            let acc: f64 = taps.iter().map(|&(j, wt)| wt * tmp[[j, x]] as f64).sum();
            out[[y, x]] = acc as f32;
        }
    }
    out
}

fn scaled_len(len: usize, factor: f64) -> Result<usize> {
    let exact = len as f64 * factor;
    let rounded = exact.round();
    if rounded < 1.0 || (exact - rounded).abs() > 1e-6 * exact.max(1.0) {
        return Err(Error::size(format!(
            "scaling {len} px by {factor} does not give an integral size"
        )));
    }
    Ok(rounded as usize)
}

/// Resamples every view and channel by `factor`; angular size is untouched.
pub fn bicubic_resize(lf: &LightField, factor: f64) -> Result<LightField> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::size(format!(
            "resize factor must be positive, got {factor}"
        )));
    }
    if factor == 1.0 {
        return Ok(lf.clone());
    }
    let (u_n, v_n) = lf.angular_size();
    let (h, w) = lf.spatial_size();
    let (oh, ow) = (scaled_len(h, factor)?, scaled_len(w, factor)?);
    let c_n = lf.channels();
    let mut out = Array5::<f32>::zeros((u_n, v_n, oh, ow, c_n));
    for u in 0..u_n {
        for v in 0..v_n {
            for c in 0..c_n {
                let plane = resize_plane(lf.plane(u, v, c), oh, ow);
                out.slice_mut(ndarray::s![u, v, .., .., c]).assign(&plane);
            }
        }
    }
    LightField::new(out, lf.colorspace(), lf.scale_tag())
}
