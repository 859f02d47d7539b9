//! Latent/pixel conversion and wrap-aware tiled decoding.
//!
//! [`tiled_decode`] reproduces the standard overlapped-tile decode: tiles are
//! decoded independently and ramp-merged on their shared overlaps. With
//! `wrap = true` it additionally decodes one circular tile spanning the wrap
//! (the last `tile_overlap` latent columns followed by the first
//! `tile_overlap`) and ramp-merges it into both image ends, so the decoder
//! itself never sees the wrap as a hard boundary. Everything away from the
//! wrap is byte-identical to the non-wrap path.
//!
//! [`ToyCodec`] is the analytic stand-in for a learned autoencoder: decode is
//! a bilinear 8x upsample of each latent channel shifted into `[0, 1]`,
//! encode is the matching 8x8 box average. Its decode is translation
//! equivariant away from a 2-latent-column boundary apron.

use rayon::prelude::*;

use crate::blend::{make_ramp, BlendSpec};
use crate::error::{Error, Result};
use crate::grid::{clamp01, LatentGrid, PixelImage};

/// Horizontal tiling parameters for [`tiled_decode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileSpec {
    /// Latent columns per tile.
    pub tile_width: usize,
    /// Latent columns shared by horizontally adjacent tiles.
    pub tile_overlap: usize,
    /// Decode one extra circular tile across the wrap and merge it into both
    /// image ends.
    pub wrap: bool,
}

impl TileSpec {
    pub fn new(tile_width: usize, tile_overlap: usize, wrap: bool) -> Result<Self> {
        if tile_overlap == 0 || tile_overlap >= tile_width {
            return Err(Error::InvalidArgument(format!(
                "tile overlap {tile_overlap} must satisfy 0 < overlap < tile width {tile_width}"
            )));
        }
        Ok(Self {
            tile_width,
            tile_overlap,
            wrap,
        })
    }

    pub fn validate_for_width(&self, latent_width: usize) -> Result<()> {
        if self.tile_overlap == 0 || self.tile_overlap >= self.tile_width {
            return Err(Error::InvalidArgument(format!(
                "tile overlap {} must satisfy 0 < overlap < tile width {}",
                self.tile_overlap, self.tile_width
            )));
        }
        if self.tile_width > latent_width {
            return Err(Error::InvalidArgument(format!(
                "tile width {} exceeds latent width {latent_width}",
                self.tile_width
            )));
        }
        Ok(())
    }
}

impl Default for TileSpec {
    /// Common tiled-decode defaults: 64-column tiles sharing 8 columns.
    fn default() -> Self {
        Self {
            tile_width: 64,
            tile_overlap: 8,
            wrap: true,
        }
    }
}

/// A latent/pixel codec. Implementations must be callable from multiple
/// threads at once; tiles are decoded concurrently.
pub trait Codec: Sync {
    /// Pixels per latent cell along each axis.
    fn scale(&self) -> usize;
    fn decode(&self, grid: &LatentGrid) -> Result<PixelImage>;
    fn encode(&self, img: &PixelImage) -> Result<LatentGrid>;
}

/// Analytic 8x codec over 3-channel latents.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToyCodec;

impl ToyCodec {
    pub const SCALE: usize = 8;

    /// Width of the boundary region, in latent columns, inside which decode
    /// is not translation equivariant (edge clamping bleeds in).
    pub const APRON: usize = 2;
}

fn bilinear_channel_clamped(grid: &LatentGrid, c: usize, sy: f64, sx: f64) -> f64 {
    let h = grid.height() as isize;
    let w = grid.width() as isize;
    let y0 = sy.floor() as isize;
    let x0 = sx.floor() as isize;
    let fy = sy - y0 as f64;
    let fx = sx - x0 as f64;
    let clamp = |v: isize, hi: isize| v.clamp(0, hi - 1) as usize;
    let v00 = f64::from(grid.get(c, clamp(y0, h), clamp(x0, w)));
    let v01 = f64::from(grid.get(c, clamp(y0, h), clamp(x0 + 1, w)));
    let v10 = f64::from(grid.get(c, clamp(y0 + 1, h), clamp(x0, w)));
    let v11 = f64::from(grid.get(c, clamp(y0 + 1, h), clamp(x0 + 1, w)));
    let top = v00 * (1.0 - fx) + v01 * fx;
    let bottom = v10 * (1.0 - fx) + v11 * fx;
    top * (1.0 - fy) + bottom * fy
}

impl Codec for ToyCodec {
    fn scale(&self) -> usize {
        Self::SCALE
    }

    /// Bilinear 8x upsample of each channel, then `clamp01(z + 0.5)` maps the
    /// channels to RGB.
    fn decode(&self, grid: &LatentGrid) -> Result<PixelImage> {
        if grid.channels() != 3 {
            return Err(Error::InvalidArgument(format!(
                "toy codec decodes 3-channel latents, got {}",
                grid.channels()
            )));
        }
        let s = Self::SCALE as f64;
        let out = PixelImage::from_fn(
            grid.height() * Self::SCALE,
            grid.width() * Self::SCALE,
            |py, px| {
                let sy = (py as f64 + 0.5) / s - 0.5;
                let sx = (px as f64 + 0.5) / s - 0.5;
                [0, 1, 2].map(|c| clamp01(bilinear_channel_clamped(grid, c, sy, sx) + 0.5))
            },
        );
        Ok(out)
    }

    /// Per-channel 8x8 box average minus 0.5.
    fn encode(&self, img: &PixelImage) -> Result<LatentGrid> {
        if !img.height().is_multiple_of(Self::SCALE) || !img.width().is_multiple_of(Self::SCALE) {
            return Err(Error::InvalidArgument(format!(
                "toy codec encodes images with dimensions divisible by {}, got {}x{}",
                Self::SCALE,
                img.height(),
                img.width()
            )));
        }
        let grid = LatentGrid::from_fn(
            3,
            img.height() / Self::SCALE,
            img.width() / Self::SCALE,
            |c, y, x| {
                let mut sum = 0.0f64;
                for dy in 0..Self::SCALE {
                    for dx in 0..Self::SCALE {
                        sum += f64::from(img.get(y * Self::SCALE + dy, x * Self::SCALE + dx)[c]);
                    }
                }
                (sum / (Self::SCALE * Self::SCALE) as f64 - 0.5) as f32
            },
        );
        Ok(grid)
    }
}

/// Latent column offsets of each tile: stride `tile_width - tile_overlap`,
/// with the last tile pulled back so it ends exactly at the right edge.
fn tile_starts(latent_width: usize, tiles: &TileSpec) -> Vec<usize> {
    let stride = tiles.tile_width - tiles.tile_overlap;
    let mut starts = vec![0usize];
    loop {
        let prev = *starts.last().expect("non-empty");
        if prev + tiles.tile_width >= latent_width {
            break;
        }
        starts.push((prev + stride).min(latent_width - tiles.tile_width));
    }
    starts
}

fn decode_and_check(codec: &dyn Codec, tile: &LatentGrid) -> Result<PixelImage> {
    let img = codec.decode(tile)?;
    let scale = codec.scale();
    if img.height() != tile.height() * scale || img.width() != tile.width() * scale {
        return Err(Error::Contract(format!(
            "codec with scale {scale} decoded a {}x{} tile into a {}x{} image",
            tile.height(),
            tile.width(),
            img.height(),
            img.width()
        )));
    }
    Ok(img)
}

/// Merges `incoming` into `canvas` columns `[x0, x0 + ramp.len())`, existing
/// content weighted `1 - a_i`, incoming weighted `a_i`. The canvas value is
/// always the left operand so accumulation order is fixed.
fn ramp_merge_columns(
    canvas: &mut [[f32; 3]],
    width: usize,
    height: usize,
    x0: usize,
    ramp: &[f64],
    incoming: impl Fn(usize, usize) -> [f32; 3],
) {
    for (i, &a) in ramp.iter().enumerate() {
        let x = x0 + i;
        for y in 0..height {
            let idx = y * width + x;
            let old = canvas[idx];
            let new = incoming(y, i);
            for c in 0..3 {
                canvas[idx][c] = ((1.0 - a) * f64::from(old[c]) + a * f64::from(new[c])) as f32;
            }
        }
    }
}

fn tiled_decode_impl(
    grid: &LatentGrid,
    codec: &dyn Codec,
    tiles: &TileSpec,
    blend: &BlendSpec,
    parallel: bool,
) -> Result<PixelImage> {
    tiles.validate_for_width(grid.width())?;
    let scale = codec.scale();
    if scale == 0 {
        return Err(Error::Contract("codec scale must be positive".to_string()));
    }
    if tiles.wrap {
        if blend.overlap > tiles.tile_overlap {
            return Err(Error::InvalidArgument(format!(
                "wrap blend overlap {} exceeds tile overlap {}; the circular tile only covers \
                 {} columns on each side of the wrap",
                blend.overlap, tiles.tile_overlap, tiles.tile_overlap
            )));
        }
        if blend.overlap * scale > tiles.tile_width * scale / 2 {
            return Err(Error::InvalidArgument(format!(
                "wrap blend overlap {} exceeds half the tile width {}",
                blend.overlap, tiles.tile_width
            )));
        }
    }

    let starts = tile_starts(grid.width(), tiles);
    let slices: Vec<LatentGrid> = starts
        .iter()
        .map(|&s| grid.slice_cols(s, tiles.tile_width))
        .collect::<Result<_>>()?;
    let decoded: Vec<PixelImage> = if parallel {
        slices
            .par_iter()
            .map(|tile| decode_and_check(codec, tile))
            .collect::<Result<_>>()?
    } else {
        slices
            .iter()
            .map(|tile| decode_and_check(codec, tile))
            .collect::<Result<_>>()?
    };

    let height_px = grid.height() * scale;
    let width_px = grid.width() * scale;
    let tile_px = tiles.tile_width * scale;
    let mut canvas = vec![[0.0f32; 3]; height_px * width_px];

    // Lay tiles left to right, ramping across each shared overlap.
    let mut prev_end_px = 0usize;
    for (&start, img) in starts.iter().zip(&decoded) {
        let x0 = start * scale;
        let overlap_px = prev_end_px.saturating_sub(x0);
        if overlap_px > 0 {
            let ramp = make_ramp(overlap_px, blend.ramp)?;
            ramp_merge_columns(&mut canvas, width_px, height_px, x0, &ramp, |y, i| {
                img.get(y, i)
            });
        }
        for x in overlap_px..tile_px {
            for y in 0..height_px {
                canvas[y * width_px + x0 + x] = img.get(y, x);
            }
        }
        prev_end_px = x0 + tile_px;
    }

    // One circular tile across the wrap, merged into both image ends.
    if tiles.wrap {
        let span = tiles.tile_overlap;
        let circular = grid.slice_cols_circular(grid.width() - span, 2 * span)?;
        let wrap_img = decode_and_check(codec, &circular)?;
        let span_px = span * scale;
        let n_px = blend.overlap * scale;
        let ramp = make_ramp(n_px, blend.ramp)?;
        // Right end: weight of the circular tile rises toward the seam.
        ramp_merge_columns(
            &mut canvas,
            width_px,
            height_px,
            width_px - n_px,
            &ramp,
            |y, i| wrap_img.get(y, span_px - n_px + i),
        );
        // Left end: mirror image, rising toward column 0.
        let mirrored: Vec<f64> = ramp.iter().rev().copied().collect();
        ramp_merge_columns(&mut canvas, width_px, height_px, 0, &mirrored, |y, i| {
            wrap_img.get(y, span_px + i)
        });
    }

    PixelImage::new(height_px, width_px, canvas)
}

/// Decodes a latent in overlapping tiles, merging overlaps with the blend
/// ramp. Tiles are decoded concurrently; the result is identical to
/// [`tiled_decode_serial`] because every output pixel's contributors and
/// weights are fixed by position.
pub fn tiled_decode(
    grid: &LatentGrid,
    codec: &dyn Codec,
    tiles: &TileSpec,
    blend: &BlendSpec,
) -> Result<PixelImage> {
    tiled_decode_impl(grid, codec, tiles, blend, true)
}

/// Sequential variant of [`tiled_decode`], kept for determinism checks.
pub fn tiled_decode_serial(
    grid: &LatentGrid,
    codec: &dyn Codec,
    tiles: &TileSpec,
    blend: &BlendSpec,
) -> Result<PixelImage> {
    tiled_decode_impl(grid, codec, tiles, blend, false)
}
