//! Image quality metrics.
//!
//! Both metrics treat images as `[0, 1]` RGB with peak value 1.
//!
//! SSIM follows the usual Gaussian-window formulation: an 11×11 window with
//! σ = 1.5 (normalized to sum 1), `C1 = (0.01)²`, `C2 = (0.03)²`, statistics
//! computed per channel over every window position fully inside the image
//! (no padding), biased (population) variances, and the result is the mean
//! of the SSIM map over all positions and channels. Images smaller than the
//! window use the largest odd window that fits, with the same σ.

use crate::error::{Error, Result};
use crate::image_io::RgbImage;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Psnr {
    /// `+∞` for identical images.
    pub db: f64,
    pub exact_match: bool,
}

fn same_shape(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::ShapeMismatch(format!(
            "images are {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

pub fn mse(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_shape(a, b)?;
    let n = a.data().len() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

pub fn psnr_from_mse(mse: f64) -> Psnr {
    if mse == 0.0 {
        Psnr {
            db: f64::INFINITY,
            exact_match: true,
        }
    } else {
        Psnr {
            db: -10.0 * mse.log10(),
            exact_match: false,
        }
    }
}

pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<Psnr> {
    Ok(psnr_from_mse(mse(a, b)?))
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of a `w×h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..n).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_shape(a, b)?;
    let (w, h) = (a.width(), a.height());
    let mut size = SSIM_WINDOW.min(w).min(h);
    if size % 2 == 0 {
        size -= 1;
    }
    let k = gaussian_window(size, SSIM_SIGMA);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        let pa: Vec<f64> = a.data().iter().skip(ch).step_by(3).copied().collect();
        let pb: Vec<f64> = b.data().iter().skip(ch).step_by(3).copied().collect();
        let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<f64>>();
        let (mu_a, _, _) = filter_valid(&pa, w, h, &k);
        let (mu_b, _, _) = filter_valid(&pb, w, h, &k);
        let (e_aa, _, _) = filter_valid(&prod(&pa, &pa), w, h, &k);
        let (e_bb, _, _) = filter_valid(&prod(&pb, &pb), w, h, &k);
        let (e_ab, _, _) = filter_valid(&prod(&pa, &pb), w, h, &k);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}
