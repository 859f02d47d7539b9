//! Wrap-aware separable image upscaling.
//!
//! Panoramas wrap horizontally, so horizontal taps index columns modulo the
//! width while vertical taps clamp at the top and bottom edges. The resize is
//! separable: the horizontal pass runs first, then the vertical pass, and the
//! result is clamped back into `[0, 1]` (the lanczos kernel can overshoot).

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::{clamp01, PixelImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Bilinear,
    Lanczos3,
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bilinear" => Ok(FilterKind::Bilinear),
            "lanczos3" => Ok(FilterKind::Lanczos3),
            other => Err(Error::InvalidArgument(format!(
                "unknown filter {other:?}, expected \"bilinear\" or \"lanczos3\""
            ))),
        }
    }
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FilterKind::Bilinear => "bilinear",
            FilterKind::Lanczos3 => "lanczos3",
        })
    }
}

impl FilterKind {
    fn support(self) -> f64 {
        match self {
            FilterKind::Bilinear => 1.0,
            FilterKind::Lanczos3 => 3.0,
        }
    }

    fn kernel(self, x: f64) -> f64 {
        match self {
            FilterKind::Bilinear => (1.0 - x.abs()).max(0.0),
            FilterKind::Lanczos3 => {
                if x.abs() < 3.0 {
                    sinc(x) * sinc(x / 3.0)
                } else {
                    0.0
                }
            }
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let a = x * std::f64::consts::PI;
        a.sin() / a
    }
}

/// Upscales by an integer factor with circular horizontal taps and clamped
/// vertical taps. Tap positions and weights are fixed by output position, so
/// the result does not depend on evaluation order.
pub fn upscale_wrap(img: &PixelImage, factor: usize, filter: FilterKind) -> Result<PixelImage> {
    if factor == 0 {
        return Err(Error::InvalidArgument(
            "upscale factor must be positive".to_string(),
        ));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let (h, w) = (img.height(), img.width());
    let out_w = w * factor;
    let out_h = h * factor;

    let taps_for = |o: usize| -> Vec<(isize, f64)> {
        let s = (o as f64 + 0.5) / factor as f64 - 0.5;
        let support = filter.support();
        let lo = (s - support).ceil() as isize;
        let hi = (s + support).floor() as isize;
        let mut taps: Vec<(isize, f64)> = (lo..=hi)
            .map(|j| (j, filter.kernel(s - j as f64)))
            .filter(|(_, w)| *w != 0.0)
            .collect();
        let sum: f64 = taps.iter().map(|(_, w)| w).sum();
        for (_, weight) in &mut taps {
            *weight /= sum;
        }
        taps
    };
    let h_taps: Vec<Vec<(isize, f64)>> = (0..out_w).map(taps_for).collect();
    let v_taps: Vec<Vec<(isize, f64)>> = (0..out_h).map(taps_for).collect();

    // Horizontal pass with circular column indexing.
    let mut mid = vec![[0.0f64; 3]; h * out_w];
    for y in 0..h {
        for (ox, taps) in h_taps.iter().enumerate() {
            let mut acc = [0.0f64; 3];
            for &(j, weight) in taps {
                let px = img.get(y, j.rem_euclid(w as isize) as usize);
                for (a, p) in acc.iter_mut().zip(px) {
                    *a += weight * f64::from(p);
                }
            }
            mid[y * out_w + ox] = acc;
        }
    }

    // Vertical pass with edge clamping.
    let out = PixelImage::from_fn(out_h, out_w, |oy, ox| {
        let mut acc = [0.0f64; 3];
        for &(j, weight) in &v_taps[oy] {
            let sy = j.clamp(0, h as isize - 1) as usize;
            let px = mid[sy * out_w + ox];
            for (a, p) in acc.iter_mut().zip(px) {
                *a += weight * p;
            }
        }
        acc.map(clamp01)
    });
    Ok(out)
}
