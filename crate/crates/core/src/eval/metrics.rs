use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::lightfield::{Colorspace, LightField};

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_pair(sr: &LightField, gt: &LightField) -> Result<()> {
    for lf in [sr, gt] {
        if lf.colorspace() != Colorspace::Y {
            return Err(Error::Colorspace {
                expected: Colorspace::Y,
                found: lf.colorspace(),
            });
        }
    }
    if sr.data().dim() != gt.data().dim() {
        return Err(Error::size(format!(
            "cannot compare {:?} with {:?}",
            sr.data().dim(),
            gt.data().dim()
        )));
    }
    Ok(())
}

/// `10 log10(1 / MSE)` for `[0, 1]` images, capped at [`PSNR_CAP`].
pub fn psnr_plane(a: ArrayView2<'_, f32>, b: ArrayView2<'_, f32>) -> f64 {
    let n = a.len() as f64;
    let sse: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum();
    let mse = sse / n;
    if mse == 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
}

fn gaussian_taps() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let taps: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable Gaussian filter keeping only fully covered positions.
fn filter_valid(img: &Array2<f64>, taps: &[f64]) -> Array2<f64> {
    let k = taps.len();
    let (h, w) = img.dim();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let rows: Array2<f64> = Array2::from_shape_fn((h, ow), |(y, x)| {
        (0..k).map(|i| taps[i] * img[[y, x + i]]).sum::<f64>()
    });
    Array2::from_shape_fn((oh, ow), |(y, x)| {
        (0..k).map(|i| taps[i] * rows[[y + i, x]]).sum::<f64>()
    })
}

/// Mean single-scale SSIM with an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03 and dynamic range 1, over window positions that
/// lie fully inside the image.
pub fn ssim_plane(a: ArrayView2<'_, f32>, b: ArrayView2<'_, f32>) -> Result<f64> {
    let (h, w) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::size(format!(
            "{h}x{w} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let taps = gaussian_taps();
    let x = a.mapv(|v| v as f64);
    let y = b.mapv(|v| v as f64);
    let mu_x = filter_valid(&x, &taps);
    let mu_y = filter_valid(&y, &taps);
    let xx = filter_valid(&(&x * &x), &taps);
    let yy = filter_valid(&(&y * &y), &taps);
    let xy = filter_valid(&(&x * &y), &taps);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for ((((&mx, &my), &sxx), &syy), &sxy) in mu_x.iter().zip(&mu_y).zip(&xx).zip(&yy).zip(&xy) {
        let vx = sxx - mx * mx;
        let vy = syy - my * my;
        let cov = sxy - mx * my;
        total +=
            ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / mu_x.len() as f64)
}

/// Per-view PSNR as a `U x V` grid.
pub fn psnr_views(sr: &LightField, gt: &LightField) -> Result<Array2<f64>> {
    check_pair(sr, gt)?;
    let (u_n, v_n) = sr.angular_size();
    Ok(Array2::from_shape_fn((u_n, v_n), |(u, v)| {
        psnr_plane(sr.plane(u, v, 0), gt.plane(u, v, 0))
    }))
}

/// Per-view SSIM as a `U x V` grid.
pub fn ssim_views(sr: &LightField, gt: &LightField) -> Result<Array2<f64>> {
    check_pair(sr, gt)?;
    let (u_n, v_n) = sr.angular_size();
    let mut out = Array2::zeros((u_n, v_n));
    for u in 0..u_n {
        for v in 0..v_n {
            out[[u, v]] = ssim_plane(sr.plane(u, v, 0), gt.plane(u, v, 0))?;
        }
    }
    Ok(out)
}

/// Y-channel PSNR averaged over all views.
pub fn psnr_y(sr: &LightField, gt: &LightField) -> Result<f64> {
    Ok(psnr_views(sr, gt)?.mean().expect("non-empty view grid"))
}

/// Y-channel SSIM averaged over all views.
pub fn ssim_y(sr: &LightField, gt: &LightField) -> Result<f64> {
    Ok(ssim_views(sr, gt)?.mean().expect("non-empty view grid"))
}
