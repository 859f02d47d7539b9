//! Equirectangular/cubemap conversion and the outpainting condition pair.
//!
//! Spherical convention: longitude `theta = (u - 0.5) * 2 pi` and latitude
//! `phi = (0.5 - v) * pi` map to the unit direction
//! `(cos phi sin theta, sin phi, cos phi cos theta)`, so `u = v = 0.5` looks
//! down +Z (the front face), `u = 0.75` looks down +X (right) and `v = 0`
//! looks straight up (+Y). The cube has six 90-degree faces; every direction
//! belongs to the face of its dominant axis component, with ties broken in
//! the fixed order front, right, back, left, up, down.

use crate::error::{Error, Result};
use crate::grid::{clamp01, PixelImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    /// +Z
    Front,
    /// +X
    Right,
    /// -Z
    Back,
    /// -X
    Left,
    /// +Y
    Up,
    /// -Y
    Down,
}

impl Face {
    /// Tie-break and storage order.
    pub const ALL: [Face; 6] = [
        Face::Front,
        Face::Right,
        Face::Back,
        Face::Left,
        Face::Up,
        Face::Down,
    ];

    /// File stem used by the on-disk cubemap layout (`front.png` etc.).
    pub fn name(self) -> &'static str {
        match self {
            Face::Front => "front",
            Face::Right => "right",
            Face::Back => "back",
            Face::Left => "left",
            Face::Up => "up",
            Face::Down => "down",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Six square faces of identical size.
#[derive(Debug, Clone, PartialEq)]
pub struct CubemapFaces {
    face_size: usize,
    faces: [PixelImage; 6],
}

impl CubemapFaces {
    /// Faces in [`Face::ALL`] order; all must be square and the same size.
    pub fn new(faces: [PixelImage; 6]) -> Result<Self> {
        let face_size = faces[0].width();
        for (face, img) in Face::ALL.iter().zip(&faces) {
            if img.width() != face_size || img.height() != face_size {
                return Err(Error::InvalidArgument(format!(
                    "{} face is {}x{}, expected {face_size}x{face_size}",
                    face.name(),
                    img.height(),
                    img.width()
                )));
            }
        }
        Ok(Self { face_size, faces })
    }

    pub fn face_size(&self) -> usize {
        self.face_size
    }

    pub fn face(&self, face: Face) -> &PixelImage {
        &self.faces[face.index()]
    }
}

/// Binary mask; 1 marks the region to be generated, 0 the known region.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Mask {
    fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(y, x)));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Fraction of known (mask 0) pixels.
    pub fn known_fraction(&self) -> f64 {
        let zeros = self.data.iter().filter(|&&m| m == 0).count();
        zeros as f64 / self.data.len() as f64
    }

    /// Renders the mask as a black/white image (1 maps to white).
    pub fn to_image(&self) -> PixelImage {
        PixelImage::from_fn(self.height, self.width, |y, x| {
            [f32::from(self.get(y, x)); 3]
        })
    }
}

/// The single-image conditioning pair: the center-cube content reprojected
/// onto the panorama, plus the mask of everything left to generate.
#[derive(Debug, Clone, PartialEq)]
pub struct OutpaintCondition {
    pub c_map: PixelImage,
    pub mask: Mask,
}

/// Unit direction for equirectangular coordinates `u` in `[0, 1)`, `v` in
/// `[0, 1]`.
pub fn equirect_dir(u: f64, v: f64) -> [f64; 3] {
    let theta = (u - 0.5) * std::f64::consts::TAU;
    let phi = (0.5 - v) * std::f64::consts::PI;
    let (sin_t, cos_t) = theta.sin_cos();
    let (sin_p, cos_p) = phi.sin_cos();
    [cos_p * sin_t, sin_p, cos_p * cos_t]
}

/// Inverse of [`equirect_dir`] up to direction scale.
fn dir_to_equirect(d: [f64; 3]) -> (f64, f64) {
    let theta = d[0].atan2(d[2]);
    let phi = d[1].atan2(d[0].hypot(d[2]));
    let u = theta / std::f64::consts::TAU + 0.5;
    let v = 0.5 - phi / std::f64::consts::PI;
    (u, v)
}

/// Direction (unnormalized) for face-plane coordinates `a`, `b` in `[-1, 1]`.
/// `a` runs left to right and `b` top to bottom in face pixel space.
fn face_dir(face: Face, a: f64, b: f64) -> [f64; 3] {
    match face {
        Face::Front => [a, -b, 1.0],
        Face::Right => [1.0, -b, -a],
        Face::Back => [-a, -b, -1.0],
        Face::Left => [-1.0, -b, a],
        Face::Up => [a, 1.0, b],
        Face::Down => [a, -1.0, -b],
    }
}

/// The face owning a direction: largest absolute axis component, ties broken
/// in [`Face::ALL`] order.
pub fn dominant_face(d: [f64; 3]) -> Face {
    let scores = [
        (Face::Front, d[2]),
        (Face::Right, d[0]),
        (Face::Back, -d[2]),
        (Face::Left, -d[0]),
        (Face::Up, d[1]),
        (Face::Down, -d[1]),
    ];
    let mut best = scores[0];
    for &candidate in &scores[1..] {
        if candidate.1 > best.1 {
            best = candidate;
        }
    }
    best.0
}

/// Face-plane coordinates of a direction on the given face.
fn face_coords(face: Face, d: [f64; 3]) -> (f64, f64) {
    let [x, y, z] = d;
    match face {
        Face::Front => (x / z, -y / z),
        Face::Right => (-z / x, -y / x),
        Face::Back => (x / z, y / z),
        Face::Left => (-z / x, y / x),
        Face::Up => (x / y, z / y),
        Face::Down => (-x / y, z / y),
    }
}

/// Bilinear sample with horizontal wrap and vertical clamp, for
/// equirectangular sources.
fn sample_equirect(img: &PixelImage, u: f64, v: f64) -> [f32; 3] {
    let w = img.width() as isize;
    let h = img.height() as isize;
    let px = u * img.width() as f64 - 0.5;
    let py = v * img.height() as f64 - 0.5;
    let x0 = px.floor() as isize;
    let y0 = py.floor() as isize;
    let fx = px - x0 as f64;
    let fy = py - y0 as f64;
    let wrap_x = |x: isize| x.rem_euclid(w) as usize;
    let clamp_y = |y: isize| y.clamp(0, h - 1) as usize;
    let p00 = img.get(clamp_y(y0), wrap_x(x0));
    let p01 = img.get(clamp_y(y0), wrap_x(x0 + 1));
    let p10 = img.get(clamp_y(y0 + 1), wrap_x(x0));
    let p11 = img.get(clamp_y(y0 + 1), wrap_x(x0 + 1));
    let mut out = [0.0f32; 3];
    for c in 0..3 {
        let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p01[c]) * fx;
        let bottom = f64::from(p10[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
        out[c] = clamp01(top * (1.0 - fy) + bottom * fy);
    }
    out
}

/// Bilinear sample clamped at the face edges; faces never wrap.
fn sample_face(img: &PixelImage, a: f64, b: f64) -> [f32; 3] {
    let n = img.width() as isize;
    let px = (a + 1.0) / 2.0 * img.width() as f64 - 0.5;
    let py = (b + 1.0) / 2.0 * img.height() as f64 - 0.5;
    let x0 = px.floor() as isize;
    let y0 = py.floor() as isize;
    let fx = px - x0 as f64;
    let fy = py - y0 as f64;
    let clamp = |v: isize| v.clamp(0, n - 1) as usize;
    let p00 = img.get(clamp(y0), clamp(x0));
    let p01 = img.get(clamp(y0), clamp(x0 + 1));
    let p10 = img.get(clamp(y0 + 1), clamp(x0));
    let p11 = img.get(clamp(y0 + 1), clamp(x0 + 1));
    let mut out = [0.0f32; 3];
    for c in 0..3 {
        let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p01[c]) * fx;
        let bottom = f64::from(p10[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
        out[c] = clamp01(top * (1.0 - fy) + bottom * fy);
    }
    out
}

/// Converts an equirectangular panorama (width must be twice the height)
/// into six cubemap faces.
pub fn equirect_to_cubemap(img: &PixelImage, face_size: usize) -> Result<CubemapFaces> {
    if img.width() != 2 * img.height() {
        return Err(Error::InvalidArgument(format!(
            "equirect panorama must have 2:1 aspect, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    if face_size == 0 {
        return Err(Error::InvalidArgument(
            "face size must be positive".to_string(),
        ));
    }
    let faces = Face::ALL.map(|face| {
        PixelImage::from_fn(face_size, face_size, |y, x| {
            let a = 2.0 * (x as f64 + 0.5) / face_size as f64 - 1.0;
            let b = 2.0 * (y as f64 + 0.5) / face_size as f64 - 1.0;
            let (u, v) = dir_to_equirect(face_dir(face, a, b));
            sample_equirect(img, u, v)
        })
    });
    CubemapFaces::new(faces)
}

/// Reprojects six cubemap faces into an equirectangular panorama of
/// `2 * out_height x out_height`.
pub fn cubemap_to_equirect(faces: &CubemapFaces, out_height: usize) -> Result<PixelImage> {
    if out_height < 2 {
        return Err(Error::InvalidArgument(format!(
            "output height must be at least 2, got {out_height}"
        )));
    }
    let out_width = 2 * out_height;
    Ok(PixelImage::from_fn(out_height, out_width, |y, x| {
        let u = (x as f64 + 0.5) / out_width as f64;
        let v = (y as f64 + 0.5) / out_height as f64;
        let d = equirect_dir(u, v);
        let face = dominant_face(d);
        let (a, b) = face_coords(face, d);
        sample_face(faces.face(face), a, b)
    }))
}

/// Builds the outpainting condition from a square perspective image: the
/// image becomes the front cube face (90-degree field of view), the other
/// five faces are zero, and the pair is reprojected onto the panorama. The
/// mask marks every pixel whose dominant axis is not +Z, exactly the region
/// the reprojection cannot know.
pub fn center_cube_condition(
    perspective: &PixelImage,
    out_height: usize,
) -> Result<OutpaintCondition> {
    if perspective.width() != perspective.height() {
        return Err(Error::InvalidArgument(format!(
            "the image should be squared, got {}x{}",
            perspective.height(),
            perspective.width()
        )));
    }
    let size = perspective.width();
    let zero = PixelImage::constant(size, size, [0.0; 3]);
    let faces = CubemapFaces::new([
        perspective.clone(),
        zero.clone(),
        zero.clone(),
        zero.clone(),
        zero.clone(),
        zero,
    ])?;
    let c_map = cubemap_to_equirect(&faces, out_height)?;
    let out_width = 2 * out_height;
    let mask = Mask::from_fn(out_height, out_width, |y, x| {
        let u = (x as f64 + 0.5) / out_width as f64;
        let v = (y as f64 + 0.5) / out_height as f64;
        dominant_face(equirect_dir(u, v)) != Face::Front
    });
    Ok(OutpaintCondition { c_map, mask })
}
