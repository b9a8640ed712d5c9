use crate::uvgeom::Image;
use crate::{Error, Result};

/// Value used for identical images in tables.
pub const PSNR_CAP: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// `10 log10(peak^2 / MSE)`; `+inf` when the inputs are identical.
pub fn psnr(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape("psnr", &[a.len()], &[b.len()]));
    }
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument("psnr peak must be positive".into()));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// PSNR with the identical-image sentinel replaced by [`PSNR_CAP`].
pub fn psnr_capped(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    Ok(psnr(a, b, peak)?.min(PSNR_CAP))
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - half).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable `valid` correlation of one plane with the window.
fn filter(p: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| g[i] * p[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| g[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Windowed SSIM with an 11x11 Gaussian window (sigma 1.5), dynamic range
/// 1, averaged over all valid windows and channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    if (a.channels, a.height, a.width) != (b.channels, b.height, b.width) {
        return Err(Error::shape(
            "ssim",
            &[a.channels, a.height, a.width],
            &[b.channels, b.height, b.width],
        ));
    }
    if a.height.min(a.width) < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            a.height, a.width
        )));
    }
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let g = gaussian_window();
    let (h, w) = (a.height, a.width);
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..a.channels {
        let (x, y) = (a.plane(c), b.plane(c));
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
        let (mx, my) = (filter(x, h, w, &g), filter(y, h, w, &g));
        let (sxx, syy, sxy) = (filter(&xx, h, w, &g), filter(&yy, h, w, &g), filter(&xy, h, w, &g));
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}
