//! Wrap-seam continuity measurement.
//!
//! The seam metric compares the transition across the wrap (last column to
//! first column) against the transitions between interior column pairs. A
//! ratio near 1 means the wrap is statistically indistinguishable from any
//! other column boundary; large ratios mean a visible crack. The ratio is
//! content independent because it normalizes by the interior median.

use crate::error::{Error, Result};
use crate::grid::PixelImage;

/// Regularizer for the degenerate all-flat case, which is defined as ratio 1.
pub const RATIO_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SeamReport {
    /// Mean absolute difference between the last and first pixel columns,
    /// over all rows and channels.
    pub seam_mad: f64,
    /// MAD of each interior column pair `(i, i + 1)` for `i` in
    /// `[1, width - 2]`, so `width - 2` entries.
    pub interior_mads: Vec<f64>,
    /// Median of `interior_mads`.
    pub interior_median: f64,
    /// `(seam_mad + eps) / (interior_median + eps)` with `eps = 1e-6`.
    pub ratio: f64,
}

fn column_mad(img: &PixelImage, a: usize, b: usize) -> f64 {
    let mut sum = 0.0f64;
    for y in 0..img.height() {
        let pa = img.get(y, a);
        let pb = img.get(y, b);
        for c in 0..3 {
            sum += (f64::from(pa[c]) - f64::from(pb[c])).abs();
        }
    }
    sum / (img.height() * 3) as f64
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Measures wrap-seam continuity. Requires width >= 3 so at least one
/// interior boundary exists.
pub fn seam_report(img: &PixelImage) -> Result<SeamReport> {
    let width = img.width();
    if width < 3 {
        return Err(Error::InvalidArgument(format!(
            "seam report needs width >= 3, got {width}"
        )));
    }
    let seam_mad = column_mad(img, width - 1, 0);
    let interior_mads: Vec<f64> = (1..width - 1).map(|i| column_mad(img, i, i + 1)).collect();
    let mut sorted = interior_mads.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("MADs are finite"));
    let interior_median = median(&sorted);
    let ratio = (seam_mad + RATIO_EPSILON) / (interior_median + RATIO_EPSILON);
    Ok(SeamReport {
        seam_mad,
        interior_mads,
        interior_median,
        ratio,
    })
}

/// Peak signal-to-noise ratio in decibels over all channels, with identical
/// images capped at 99 dB.
pub fn psnr(a: &PixelImage, b: &PixelImage) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::InvalidArgument(format!(
            "psnr dimension mismatch: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let mut sum = 0.0f64;
    for (pa, pb) in a.pixels().iter().zip(b.pixels()) {
        for c in 0..3 {
            let d = f64::from(pa[c]) - f64::from(pb[c]);
            sum += d * d;
        }
    }
    let mse = sum / (a.pixels().len() * 3) as f64;
    let db = 10.0 * (1.0 / mse).log10();
    Ok(db.min(99.0))
}
