//! Value types for latents and images, plus bit-exact file I/O.
//!
//! Latents travel as `LTG1` files: a 16-byte header (4-byte magic `LTG1`,
//! then channels, height, width as unsigned 32-bit little-endian) followed by
//! the payload as 32-bit IEEE-754 little-endian floats in the same
//! channel-major layout as [`LatentGrid`]. Total size is always
//! `16 + 4 * channels * height * width` bytes and round trips are bit exact.
//!
//! Images travel as 8-bit RGB PNG without alpha. Reading maps byte `b` to
//! `b / 255`; writing maps value `v` to `round(v * 255)` clamped to `[0, 255]`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const LATENT_MAGIC: [u8; 4] = *b"LTG1";
pub const LATENT_HEADER_LEN: usize = 16;

/// A channels x height x width grid of finite reals.
///
/// Layout is channel-major then row-major: element `(c, y, x)` lives at
/// `data[(c * height + y) * width + x]`, so one (channel, row) span is
/// contiguous. Values are immutable after construction apart from explicit
/// in-place edits by the blending primitives.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl LatentGrid {
    /// Builds a grid, checking shape, length and finiteness.
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        let expect = channels * height * width;
        if data.len() != expect {
            return Err(Error::InvalidArgument(format!(
                "grid data length {} does not match {channels}x{height}x{width} = {expect}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite sample at flat index {pos}"
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Builds a grid from a per-element function.
    ///
    /// Shape errors are impossible here and finiteness is the caller's
    /// responsibility: sampling code intentionally constructs intermediate
    /// grids first and validates them afterwards so it can report which step
    /// produced a non-finite value.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        assert!(channels > 0 && height > 0 && width > 0, "empty grid shape");
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::from_fn(channels, height, width, |_, _, _| 0.0)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    #[inline]
    fn index(&self, c: usize, y: usize, x: usize) -> usize {
        debug_assert!(c < self.channels && y < self.height && x < self.width);
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    /// Copies a contiguous column range into a new grid.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.width {
            return Err(Error::InvalidArgument(format!(
                "column slice [{start}, {}) out of range for width {}",
                start + len,
                self.width
            )));
        }
        Ok(Self::from_fn(self.channels, self.height, len, |c, y, x| {
            self.get(c, y, start + x)
        }))
    }

    /// Copies a column range with circular (modular) column indexing, so the
    /// range may span the wrap.
    pub fn slice_cols_circular(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || len > self.width {
            return Err(Error::InvalidArgument(format!(
                "circular slice of {len} columns out of range for width {}",
                self.width
            )));
        }
        Ok(Self::from_fn(self.channels, self.height, len, |c, y, x| {
            self.get(c, y, (start + x) % self.width)
        }))
    }
}

/// A height x width RGB image with components in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelImage {
    height: usize,
    width: usize,
    data: Vec<[f32; 3]>,
}

impl PixelImage {
    pub fn new(height: usize, width: usize, data: Vec<[f32; 3]>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "image data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if data
            .iter()
            .flatten()
            .any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(Error::InvalidData(
                "image component outside [0, 1]".to_string(),
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Builds an image from a per-pixel function. The function must return
    /// components already inside `[0, 1]`; decode and projection operations
    /// clamp before storing.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Self {
        assert!(height > 0 && width > 0, "empty image shape");
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn constant(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        Self::from_fn(height, width, |_, _| rgb)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> [f32; 3] {
        debug_assert!(y < self.height && x < self.width);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        debug_assert!(y < self.height && x < self.width);
        self.data[y * self.width + x] = rgb;
    }
}

#[inline]
pub(crate) fn clamp01(v: f64) -> f32 {
    v.clamp(0.0, 1.0) as f32
}

/// Writes a grid as an `LTG1` stream. Returns the number of bytes written,
/// always `16 + 4 * channels * height * width`.
pub fn write_latent(grid: &LatentGrid, sink: &mut impl Write) -> Result<u64> {
    let ctx = "writing latent stream";
    let mut header = [0u8; LATENT_HEADER_LEN];
    header[..4].copy_from_slice(&LATENT_MAGIC);
    header[4..8].copy_from_slice(&(grid.channels() as u32).to_le_bytes());
    header[8..12].copy_from_slice(&(grid.height() as u32).to_le_bytes());
    header[12..16].copy_from_slice(&(grid.width() as u32).to_le_bytes());
    sink.write_all(&header).map_err(|e| Error::io(ctx, e))?;
    let mut payload = Vec::with_capacity(grid.data().len() * 4);
    for v in grid.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    sink.write_all(&payload).map_err(|e| Error::io(ctx, e))?;
    Ok((LATENT_HEADER_LEN + payload.len()) as u64)
}

/// Reads an `LTG1` stream back into a grid, validating magic, size and
/// payload finiteness.
pub fn read_latent(source: &mut impl Read) -> Result<LatentGrid> {
    let ctx = "reading latent stream";
    let mut header = [0u8; LATENT_HEADER_LEN];
    source
        .read_exact(&mut header)
        .map_err(|e| Error::io(ctx, e))?;
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&header[..4]);
    if magic != LATENT_MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let channels = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    if channels == 0 || height == 0 || width == 0 {
        return Err(Error::Corrupt(format!(
            "zero dimension in header ({channels}x{height}x{width})"
        )));
    }
    let count = channels
        .checked_mul(height)
        .and_then(|n| n.checked_mul(width))
        .ok_or_else(|| Error::Corrupt("header dimensions overflow".to_string()))?;
    let expect = count * 4;
    let mut payload = Vec::new();
    source
        .read_to_end(&mut payload)
        .map_err(|e| Error::io(ctx, e))?;
    if payload.len() != expect {
        return Err(Error::Corrupt(format!(
            "payload is {} bytes, header declares {expect}",
            payload.len()
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    LatentGrid::new(channels, height, width, data)
}

pub fn write_latent_file(grid: &LatentGrid, path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let file =
        File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut writer = BufWriter::new(file);
    let n = write_latent(grid, &mut writer)?;
    writer
        .into_inner()
        .map_err(|e| Error::io(format!("flushing {}", path.display()), e.into_error()))?;
    Ok(n)
}

pub fn read_latent_file(path: impl AsRef<Path>) -> Result<LatentGrid> {
    let path = path.as_ref();
    let mut file =
        File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_latent(&mut file)
}

/// Encodes an image as 8-bit RGB PNG. Returns the number of bytes written.
pub fn write_image(img: &PixelImage, path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(img.height() * img.width() * 3);
    for px in img.pixels() {
        for v in px {
            let b = (f64::from(*v) * 255.0).round().clamp(0.0, 255.0) as u8;
            bytes.push(b);
        }
    }
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| png_error(path, "encoding", e))?;
        writer
            .write_image_data(&bytes)
            .map_err(|e| png_error(path, "encoding", e))?;
    }
    std::fs::write(path, &out).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(out.len() as u64)
}

/// Decodes an 8-bit PNG into an image, mapping byte `b` to `b / 255`.
/// Grayscale and alpha inputs are widened to RGB; alpha is dropped.
pub fn read_image(path: impl AsRef<Path>) -> Result<PixelImage> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder
        .read_info()
        .map_err(|e| png_error(path, "decoding", e))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| png_error(path, "decoding", e))?;
    let width = info.width as usize;
    let height = info.height as usize;
    let stride = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        other => {
            return Err(Error::io(
                format!("decoding {}", path.display()),
                std::io::Error::other(format!("unsupported PNG color type {other:?}")),
            ))
        }
    };
    let mut data = Vec::with_capacity(height * width);
    for px in buf[..height * width * stride].chunks_exact(stride) {
        let rgb = match stride {
            3 | 4 => [px[0], px[1], px[2]],
            _ => [px[0], px[0], px[0]],
        };
        data.push(rgb.map(|b| f32::from(b) / 255.0));
    }
    PixelImage::new(height, width, data)
}

fn png_error(path: &Path, what: &str, e: impl std::error::Error) -> Error {
    Error::io(
        format!("{what} {}", path.display()),
        std::io::Error::other(e.to_string()),
    )
}
