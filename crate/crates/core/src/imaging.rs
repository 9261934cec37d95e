//! Images, colour conversion, resizing and PNG I/O.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 8-bit sRGB image, rows top to bottom, interleaved RGB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(RgbImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        RgbImage::new(width, height, rgb.repeat(width * height))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// CIELAB image (D65), one `[L, a, b]` triple per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl LabImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} Lab image cannot hold {} pixels",
                pixels.len()
            )));
        }
        Ok(LabImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }
}

/// Axis-aligned box covering `[x_min, x_max) x [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; 4]", into = "[usize; 4]")]
pub struct BBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BBox {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Result<Self> {
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::Argument(format!(
                "degenerate box ({x_min}, {y_min}, {x_max}, {y_max})"
            )));
        }
        Ok(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> usize {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        self.x_max <= width && self.y_max <= height
    }
}

impl TryFrom<[usize; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [usize; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [usize; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

/// Boolean per-pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} mask cannot hold {} pixels",
                bits.len()
            )));
        }
        Ok(Mask {
            width,
            height,
            bits,
        })
    }

    /// Rasterizes `bbox`; the box is clipped to the mask bounds.
    pub fn from_bbox(width: usize, height: usize, bbox: &BBox) -> Result<Self> {
        let mut bits = vec![false; width * height];
        for y in bbox.y_min..bbox.y_max.min(height) {
            for x in bbox.x_min..bbox.x_max.min(width) {
                bits[y * width + x] = true;
            }
        }
        Mask::new(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Row-major 2-D grid of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument("grid dimensions must be positive".into()));
        }
        if values.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} grid cannot hold {} values",
                values.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Grid::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// `(min, max)` of the values.
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

// sRGB (D65) to XYZ, and the D65 reference white for the 2 degree observer.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];
const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];

fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts one sRGB triple to CIELAB.
pub fn rgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    lab_from_linear([
        srgb_to_linear(rgb[0]),
        srgb_to_linear(rgb[1]),
        srgb_to_linear(rgb[2]),
    ])
}

fn lab_from_linear(lin: [f64; 3]) -> [f64; 3] {
    let xyz = RGB_TO_XYZ.map(|row| row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]);
    let fx = lab_f(xyz[0] / WHITE_D65[0]);
    let fy = lab_f(xyz[1] / WHITE_D65[1]);
    let fz = lab_f(xyz[2] / WHITE_D65[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn srgb_to_lab(image: &RgbImage) -> LabImage {
    let table: Vec<f64> = (0..=255u8).map(srgb_to_linear).collect();
    let pixels = image
        .pixels
        .chunks_exact(3)
        .map(|p| {
            lab_from_linear([
                table[p[0] as usize],
                table[p[1] as usize],
                table[p[2] as usize],
            ])
        })
        .collect();
    LabImage {
        width: image.width,
        height: image.height,
        pixels,
    }
}

// Align-corners sample positions: source coordinate, lower index, fraction.
fn sample_axis(src: usize, dst: usize) -> Vec<(usize, f64)> {
    (0..dst)
        .map(|i| {
            if src == 1 || dst == 1 {
                return (0, 0.0);
            }
            let pos = (i * (src - 1)) as f64 / (dst - 1) as f64;
            let lo = (pos.floor() as usize).min(src - 2);
            (lo, pos - lo as f64)
        })
        .collect()
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    // exact at t = 0 and t = 1; the clamp keeps rounding inside the endpoints
    let v = (1.0 - t) * a + t * b;
    v.clamp(a.min(b), a.max(b))
}

/// Bilinear resize with the align-corners convention: corner samples of the
/// output coincide with corner samples of the input.
pub fn bilinear_resize(map: &Grid, height: usize, width: usize) -> Result<Grid> {
    if height == 0 || width == 0 {
        return Err(Error::Argument(format!(
            "resize target must be positive, got {height}x{width}"
        )));
    }
    let xs = sample_axis(map.width, width);
    let ys = sample_axis(map.height, height);
    let mut out = Vec::with_capacity(width * height);
    for &(y0, ty) in &ys {
        let y1 = (y0 + 1).min(map.height - 1);
        for &(x0, tx) in &xs {
            let x1 = (x0 + 1).min(map.width - 1);
            let top = lerp(map.get(x0, y0), map.get(x1, y0), tx);
            let bottom = lerp(map.get(x0, y1), map.get(x1, y1), tx);
            out.push(lerp(top, bottom, ty));
        }
    }
    Grid::new(width, height, out)
}

fn png_error(path: &Path, e: png::DecodingError) -> Error {
    match e {
        png::DecodingError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

fn open_png(path: &Path, transform: png::Transformations) -> Result<(png::OutputInfo, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(transform);
    let mut reader = decoder.read_info().map_err(|e| png_error(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| png_error(path, e))?;
    buf.truncate(info.buffer_size());
    Ok((info, buf))
}

/// Loads a PNG as 8-bit RGB. Gray is replicated, alpha is dropped.
pub fn load_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let (info, buf) = open_png(path, png::Transformations::normalize_to_color8())?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => {
            return Err(Error::Unsupported("palette PNG after expansion".into()))
        }
    };
    let stride = info.line_size;
    let mut pixels = Vec::with_capacity(w * h * 3);
    for row in buf.chunks(stride).take(h) {
        for px in row[..w * channels].chunks_exact(channels) {
            match channels {
                1 | 2 => pixels.extend_from_slice(&[px[0]; 3]),
                _ => pixels.extend_from_slice(&px[..3]),
            }
        }
    }
    RgbImage::new(w, h, pixels)
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(depth);
    let enc_err = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    };
    let mut writer = encoder.write_header().map_err(enc_err)?;
    writer.write_image_data(data).map_err(enc_err)?;
    writer.finish().map_err(enc_err)
}

pub fn save_png(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    write_png(
        path.as_ref(),
        image.width,
        image.height,
        png::ColorType::Rgb,
        png::BitDepth::Eight,
        &image.pixels,
    )
}

/// Writes a 1-bit grayscale PNG (white = set).
pub fn save_mask_png(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let row_bytes = mask.width.div_ceil(8);
    let mut data = vec![0u8; row_bytes * mask.height];
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                data[y * row_bytes + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    write_png(
        path.as_ref(),
        mask.width,
        mask.height,
        png::ColorType::Grayscale,
        png::BitDepth::One,
        &data,
    )
}

/// Loads any PNG as a mask; a pixel is set when its first channel is non-zero.
pub fn load_mask_png(path: impl AsRef<Path>) -> Result<Mask> {
    let img = load_png(path)?;
    let bits = img.pixels.chunks_exact(3).map(|p| p[0] != 0).collect();
    Mask::new(img.width, img.height, bits)
}

/// Writes a 16-bit grayscale PNG holding one value per pixel.
pub fn save_gray16_png(width: usize, height: usize, values: &[u16], path: impl AsRef<Path>) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::Shape(format!(
            "{width}x{height} image cannot hold {} values",
            values.len()
        )));
    }
    let data: Vec<u8> = values.iter().flat_map(|v| v.to_be_bytes()).collect();
    write_png(
        path.as_ref(),
        width,
        height,
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
        &data,
    )
}

/// Reads a 16-bit grayscale PNG written by [`save_gray16_png`].
pub fn load_gray16_png(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u16>)> {
    let path = path.as_ref();
    let (info, buf) = open_png(path, png::Transformations::IDENTITY)?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::Unsupported(format!(
            "{}: expected 16-bit grayscale PNG",
            path.display()
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut values = Vec::with_capacity(w * h);
    for row in buf.chunks(info.line_size).take(h) {
        values.extend(row[..w * 2].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])));
    }
    Ok((w, h, values))
}
