//! Circular blending of the wrap-adjacent latent strips.
//!
//! The latent is widened by `overlap` circularly copied columns into an
//! [`ExtendedCanvas`]. After every denoising step the rightmost strip (the
//! extension, columns `[out_width, out_width + overlap)`) and the leftmost
//! strip (columns `[0, overlap)`) are merged with a monotone weight ramp and
//! the merged values are written back into both strips, keeping the two
//! circularly identified regions exactly equal. Cropping the extension at the
//! end yields a latent whose first column is a consistent continuation of its
//! last column.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::LatentGrid;

/// Weight ramp shape across the overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RampKind {
    Linear,
    Cosine,
}

impl std::str::FromStr for RampKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(RampKind::Linear),
            "cosine" => Ok(RampKind::Cosine),
            other => Err(Error::InvalidArgument(format!(
                "unknown ramp {other:?}, expected \"linear\" or \"cosine\""
            ))),
        }
    }
}

impl std::fmt::Display for RampKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RampKind::Linear => "linear",
            RampKind::Cosine => "cosine",
        })
    }
}

/// How wide the blended strips are and how the weights ramp across them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendSpec {
    /// Strip width in latent columns. Must stay at or below a quarter of the
    /// output width it is applied to.
    pub overlap: usize,
    pub ramp: RampKind,
    /// Tolerance for strip-equality checks.
    pub epsilon: f64,
}

pub const DEFAULT_EPSILON: f64 = 1e-6;

impl BlendSpec {
    pub fn new(overlap: usize, ramp: RampKind) -> Result<Self> {
        if overlap == 0 {
            return Err(Error::InvalidArgument(
                "blend overlap must be at least 1 column".to_string(),
            ));
        }
        Ok(Self {
            overlap,
            ramp,
            epsilon: DEFAULT_EPSILON,
        })
    }

    /// Default strip width for a given output width: one eighth, at least 1.
    pub fn default_overlap(out_width: usize) -> usize {
        (out_width / 8).max(1)
    }

    /// Checks the overlap against the output width it will be applied to.
    pub fn validate_for_width(&self, out_width: usize) -> Result<()> {
        if self.overlap == 0 || self.overlap > out_width / 4 {
            return Err(Error::InvalidArgument(format!(
                "blend overlap {} invalid for output width {out_width} (must be in [1, {}])",
                self.overlap,
                out_width / 4
            )));
        }
        Ok(())
    }
}

/// Blend weights for an overlap of `n` columns.
///
/// Weights are sampled at strip midpoints `(i + 0.5) / n` so neither end of
/// the ramp is exactly 0 or 1 and both strips always contribute:
///
/// - linear: `a_i = (i + 0.5) / n`
/// - cosine: `a_i = (1 - cos(pi * (i + 0.5) / n)) / 2`
///
/// Both ramps are strictly increasing and satisfy `a_i + a_{n-1-i} = 1`.
pub fn make_ramp(n: usize, ramp: RampKind) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "ramp length must be at least 1".to_string(),
        ));
    }
    let weights = (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) / n as f64;
            match ramp {
                RampKind::Linear => t,
                RampKind::Cosine => (1.0 - (std::f64::consts::PI * t).cos()) / 2.0,
            }
        })
        .collect();
    Ok(weights)
}

/// A latent widened by `overlap` circularly copied columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedCanvas {
    grid: LatentGrid,
    out_width: usize,
    overlap: usize,
}

impl ExtendedCanvas {
    /// Wraps an already extended grid. The grid width must equal
    /// `out_width + overlap`.
    pub fn from_parts(grid: LatentGrid, out_width: usize, overlap: usize) -> Result<Self> {
        if overlap == 0 || grid.width() != out_width + overlap {
            return Err(Error::InvalidArgument(format!(
                "canvas width {} does not match out_width {out_width} + overlap {overlap}",
                grid.width()
            )));
        }
        Ok(Self {
            grid,
            out_width,
            overlap,
        })
    }

    pub fn grid(&self) -> &LatentGrid {
        &self.grid
    }

    pub fn into_grid(self) -> LatentGrid {
        self.grid
    }

    pub fn out_width(&self) -> usize {
        self.out_width
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    /// Largest absolute difference between the two identified strips.
    pub fn strip_divergence(&self) -> f64 {
        let mut worst = 0.0f64;
        for c in 0..self.grid.channels() {
            for y in 0..self.grid.height() {
                for i in 0..self.overlap {
                    let left = f64::from(self.grid.get(c, y, i));
                    let right = f64::from(self.grid.get(c, y, self.out_width + i));
                    worst = worst.max((left - right).abs());
                }
            }
        }
        worst
    }
}

/// Widens a grid by `overlap` columns copied circularly from its left edge.
pub fn extend_canvas(grid: &LatentGrid, overlap: usize) -> Result<ExtendedCanvas> {
    if overlap == 0 {
        return Err(Error::InvalidArgument(
            "canvas overlap must be at least 1 column".to_string(),
        ));
    }
    if grid.width() < 4 * overlap {
        return Err(Error::InvalidArgument(format!(
            "overlap {overlap} too large for width {} (need width >= 4 * overlap)",
            grid.width()
        )));
    }
    let (channels, height, width) = grid.shape();
    let extended = LatentGrid::from_fn(channels, height, width + overlap, |c, y, x| {
        grid.get(c, y, x % width)
    });
    ExtendedCanvas::from_parts(extended, width, overlap)
}

/// One blending pass: for each channel, row and strip column `i`,
///
/// `v_i = (1 - a_i) * x[out_width + i] + a_i * x[i]`
///
/// and `v_i` is written into both strips. Every other column is untouched, so
/// the pass is local, idempotent, and leaves the strips exactly equal.
pub fn blend_step(canvas: &mut ExtendedCanvas, spec: &BlendSpec) -> Result<()> {
    if spec.overlap != canvas.overlap {
        return Err(Error::InvalidArgument(format!(
            "blend overlap {} does not match canvas overlap {}",
            spec.overlap, canvas.overlap
        )));
    }
    let ramp = make_ramp(spec.overlap, spec.ramp)?;
    let out_width = canvas.out_width;
    let grid = &mut canvas.grid;
    for c in 0..grid.channels() {
        for y in 0..grid.height() {
            for (i, &a) in ramp.iter().enumerate() {
                let left = f64::from(grid.get(c, y, i));
                let right = f64::from(grid.get(c, y, out_width + i));
                let v = ((1.0 - a) * right + a * left) as f32;
                grid.set(c, y, i, v);
                grid.set(c, y, out_width + i, v);
            }
        }
    }
    Ok(())
}

/// Drops the extension, keeping columns `[0, out_width)`.
pub fn crop_extension(canvas: &ExtendedCanvas) -> LatentGrid {
    canvas
        .grid
        .slice_cols(0, canvas.out_width)
        .expect("canvas invariant guarantees out_width columns")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn canvas_from_values(values: &[f32], out_width: usize) -> ExtendedCanvas {
        let grid = LatentGrid::new(1, 1, values.len(), values.to_vec()).unwrap();
        ExtendedCanvas::from_parts(grid, out_width, values.len() - out_width).unwrap()
    }

    #[test]
    fn linear_ramp_of_four() {
        assert_eq!(
            make_ramp(4, RampKind::Linear).unwrap(),
            vec![0.125, 0.375, 0.625, 0.875]
        );
    }

    #[test]
    fn single_column_ramp_is_midpoint() {
        assert_eq!(make_ramp(1, RampKind::Linear).unwrap(), vec![0.5]);
        // cos(pi/2) rounds to 6.1e-17 rather than zero.
        assert!((make_ramp(1, RampKind::Cosine).unwrap()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cosine_ramp_of_two() {
        // (1 - cos(pi * 0.25)) / 2 and (1 - cos(pi * 0.75)) / 2.
        let ramp = make_ramp(2, RampKind::Cosine).unwrap();
        assert!((ramp[0] - 0.146_446_609_406_726_24).abs() < 1e-15);
        assert!((ramp[1] - 0.853_553_390_593_273_8).abs() < 1e-15);
    }

    #[test]
    fn empty_ramp_rejected() {
        assert!(make_ramp(0, RampKind::Linear).is_err());
    }

    #[test]
    fn ramp_symmetry_both_kinds() {
        for kind in [RampKind::Linear, RampKind::Cosine] {
            for n in [1usize, 2, 3, 4, 7, 8, 16, 33, 128] {
                let ramp = make_ramp(n, kind).unwrap();
                for i in 0..n {
                    let sum = ramp[i] + ramp[n - 1 - i];
                    assert!((sum - 1.0).abs() < 1e-12, "{kind} n={n} i={i}: {sum}");
                }
                for w in ramp.windows(2) {
                    assert!(w[0] < w[1], "{kind} n={n} not strictly increasing");
                }
            }
        }
    }

    #[test]
    fn extend_copies_left_columns() {
        let grid = LatentGrid::from_fn(1, 1, 8, |_, _, x| x as f32);
        let canvas = extend_canvas(&grid, 2).unwrap();
        assert_eq!(canvas.grid().width(), 10);
        assert_eq!(
            canvas.grid().data(),
            &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 0.0, 1.0]
        );
    }

    #[test]
    fn extend_constant_stays_constant() {
        let grid = LatentGrid::from_fn(2, 3, 8, |_, _, _| 0.25);
        let canvas = extend_canvas(&grid, 2).unwrap();
        assert!(canvas.grid().data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn extend_rejects_bad_overlap() {
        let grid = LatentGrid::from_fn(1, 1, 8, |_, _, x| x as f32);
        assert!(extend_canvas(&grid, 0).is_err());
        assert!(extend_canvas(&grid, 3).is_err());
    }

    #[test]
    fn worked_blend_example() {
        let mut canvas =
            canvas_from_values(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 10.0, 20.0], 8);
        let spec = BlendSpec::new(2, RampKind::Linear).unwrap();
        blend_step(&mut canvas, &spec).unwrap();
        assert_eq!(
            canvas.grid().data(),
            &[7.5, 5.75, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 7.5, 5.75]
        );
    }

    #[test]
    fn blend_leaves_equal_strips_unchanged() {
        let mut canvas =
            canvas_from_values(&[0.5, -1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 0.5, -1.0], 8);
        let before = canvas.grid().data().to_vec();
        let spec = BlendSpec::new(2, RampKind::Cosine).unwrap();
        blend_step(&mut canvas, &spec).unwrap();
        assert_eq!(canvas.grid().data(), &before[..]);
    }

    #[test]
    fn blend_constant_canvas_unchanged() {
        let mut canvas = canvas_from_values(&[0.3; 10], 8);
        let spec = BlendSpec::new(2, RampKind::Linear).unwrap();
        blend_step(&mut canvas, &spec).unwrap();
        assert!(canvas.grid().data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn strips_exactly_equal_after_blend() {
        let grid =
            LatentGrid::from_fn(3, 4, 13, |c, y, x| ((c * 31 + y * 7 + x) % 11) as f32 - 5.0);
        let mut canvas = ExtendedCanvas::from_parts(grid, 10, 3).unwrap();
        let spec = BlendSpec::new(3, RampKind::Cosine).unwrap();
        blend_step(&mut canvas, &spec).unwrap();
        assert_eq!(canvas.strip_divergence(), 0.0);
    }

    #[test]
    fn crop_inverts_extend() {
        let grid = LatentGrid::from_fn(2, 2, 8, |c, y, x| (c + y + x) as f32 * 0.5);
        let canvas = extend_canvas(&grid, 2).unwrap();
        assert_eq!(crop_extension(&canvas), grid);
    }

    #[test]
    fn crop_keeps_blended_strip() {
        let mut canvas =
            canvas_from_values(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 10.0, 20.0], 8);
        let spec = BlendSpec::new(2, RampKind::Linear).unwrap();
        blend_step(&mut canvas, &spec).unwrap();
        let cropped = crop_extension(&canvas);
        assert_eq!(cropped.get(0, 0, 0), canvas.grid().get(0, 0, 8));
        assert_eq!(cropped.get(0, 0, 1), canvas.grid().get(0, 0, 9));
    }

    #[test]
    fn blend_spec_overlap_must_match_canvas() {
        let mut canvas = canvas_from_values(&[0.0; 10], 8);
        let spec = BlendSpec::new(1, RampKind::Linear).unwrap();
        assert!(blend_step(&mut canvas, &spec).is_err());
    }

    #[test]
    fn spec_width_guard() {
        let spec = BlendSpec::new(3, RampKind::Linear).unwrap();
        assert!(spec.validate_for_width(12).is_ok());
        assert!(spec.validate_for_width(11).is_err());
        assert!(BlendSpec::new(0, RampKind::Linear).is_err());
    }

    proptest! {
        #[test]
        fn blend_is_idempotent_and_local(
            values in proptest::collection::vec(-100.0f32..100.0, 12 * 2 * 3),
            kind in prop_oneof![Just(RampKind::Linear), Just(RampKind::Cosine)],
        ) {
            let grid = LatentGrid::new(3, 2, 12, values).unwrap();
            let mut canvas = ExtendedCanvas::from_parts(grid, 9, 3).unwrap();
            let spec = BlendSpec { overlap: 3, ramp: kind, epsilon: DEFAULT_EPSILON };
            let before = canvas.grid().clone();
            blend_step(&mut canvas, &spec).unwrap();
            let once = canvas.grid().clone();
            blend_step(&mut canvas, &spec).unwrap();
            let twice = canvas.grid().clone();

            // Idempotence: the second pass mixes already equal strips.
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((f64::from(*a) - f64::from(*b)).abs() <= 1e-12);
            }
            // Locality: interior columns are bit-identical.
            for c in 0..3 {
                for y in 0..2 {
                    for x in 3..9 {
                        prop_assert_eq!(once.get(c, y, x).to_bits(), before.get(c, y, x).to_bits());
                    }
                }
            }
            // Convexity: each blended value stays inside its input interval.
            for c in 0..3 {
                for y in 0..2 {
                    for i in 0..3 {
                        let l = before.get(c, y, i);
                        let r = before.get(c, y, 9 + i);
                        let v = once.get(c, y, i);
                        prop_assert!(v >= l.min(r) && v <= l.max(r));
                    }
                }
            }
        }
    }
}
