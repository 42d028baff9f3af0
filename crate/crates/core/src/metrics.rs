//! PSNR and SSIM between 8-bit images.

use thiserror::Error;

use crate::netpbm::Image;

/// Peak signal power for 8-bit samples.
pub const PEAK: f64 = 255.0 * 255.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("image dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("{height}x{width} image is smaller than the {window}x{window} SSIM window")]
    TooSmall { height: usize, width: usize, window: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityReport {
    /// `f64::INFINITY` for identical images.
    pub psnr: f64,
    pub ssim: f64,
}

fn dims(img: &Image) -> (usize, usize, usize) {
    (img.channels(), img.height(), img.width())
}

fn same_dims(a: &Image, b: &Image) -> Result<(), MetricError> {
    if dims(a) != dims(b) {
        return Err(MetricError::DimensionMismatch(dims(a), dims(b)));
    }
    Ok(())
}

pub fn mse(reference: &Image, estimate: &Image) -> Result<f64, MetricError> {
    same_dims(reference, estimate)?;
    let sum: f64 = reference
        .data()
        .iter()
        .zip(estimate.data())
        .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
        .sum();
    Ok(sum / reference.data().len() as f64)
}

pub fn psnr(reference: &Image, estimate: &Image) -> Result<f64, MetricError> {
    let m = mse(reference, estimate)?;
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK / m).log10()
    })
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let mid = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - mid).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn ssim_formula(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64) -> f64 {
    ((2.0 * mx * my + C1) * (2.0 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2))
}

/// Valid-mode separable filtering of one plane.
fn filter(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(t, g)| g * plane[y * w + x + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(t, g)| g * rows[(y + t) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[u8], b: &[u8], h: usize, w: usize, taps: &[f64]) -> f64 {
    let x: Vec<f64> = a.iter().map(|&v| f64::from(v)).collect();
    let y: Vec<f64> = b.iter().map(|&v| f64::from(v)).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let [mx, my, exx, eyy, exy] = [&x, &y, &xx, &yy, &xy].map(|p| filter(p, h, w, taps));
    let n = mx.len();
    (0..n)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            ssim_formula(ux, uy, exx[i] - ux * ux, eyy[i] - uy * uy, exy[i] - ux * uy)
        })
        .sum::<f64>()
        / n as f64
}

/// Mean SSIM over all valid 11×11 Gaussian windows, averaged over channels.
pub fn ssim(reference: &Image, estimate: &Image) -> Result<f64, MetricError> {
    same_dims(reference, estimate)?;
    let (c, h, w) = dims(reference);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(MetricError::TooSmall {
            height: h,
            width: w,
            window: SSIM_WINDOW,
        });
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let total: f64 = (0..c)
        .map(|ch| ssim_plane(reference.plane(ch), estimate.plane(ch), h, w, &taps))
        .sum();
    Ok(total / c as f64)
}

/// SSIM from whole-image statistics of each channel, averaged over channels.
pub fn ssim_global(reference: &Image, estimate: &Image) -> Result<f64, MetricError> {
    same_dims(reference, estimate)?;
    let c = reference.channels();
    let total: f64 = (0..c)
        .map(|ch| {
            let (a, b) = (reference.plane(ch), estimate.plane(ch));
            let n = a.len() as f64;
            let mx = a.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
            let my = b.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for (&p, &q) in a.iter().zip(b) {
                let (dx, dy) = (f64::from(p) - mx, f64::from(q) - my);
                vx += dx * dx;
                vy += dy * dy;
                cxy += dx * dy;
            }
            ssim_formula(mx, my, vx / n, vy / n, cxy / n)
        })
        .sum();
    Ok(total / c as f64)
}

pub fn quality(reference: &Image, estimate: &Image) -> Result<QualityReport, MetricError> {
    Ok(QualityReport {
        psnr: psnr(reference, estimate)?,
        ssim: ssim(reference, estimate)?,
    })
}
