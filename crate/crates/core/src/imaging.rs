//! Planar float images and their on-disk formats.
//!
//! Pixels live in channel-major order (`R` plane, then `G`, then `B`), each plane
//! row-major. PNG files are interleaved, so the transpose happens here at the I/O
//! boundary and nowhere else.
//!
//! Two formats are supported:
//!
//! * 8- and 16-bit PNG, normalized by `2^bits - 1` on load and quantized with
//!   round-half-up on save.
//! * The native float container, stored verbatim:
//!
//! ```text
//! "RFT1" | u32 width | u32 height | u32 channels | f32 data[channels*height*width]
//! ```
//!
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONTAINER_MAGIC: &[u8; 4] = b"RFT1";

/// Largest accepted width or height.
pub const MAX_DIMENSION: u64 = 1 << 24;

/// A 3-channel float image in planar layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl PlanarImage {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_dimension(width as u64)?;
        check_dimension(height as u64)?;
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(Self::CHANNELS))
            .ok_or(Error::DimensionOverflow(width.max(height) as u64))?;
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height}x3 needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height * Self::CHANNELS])
    }

    /// Build an image by evaluating `f(channel, x, y)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * Self::CHANNELS);
        for c in 0..Self::CHANNELS {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, x, y));
                }
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        Self::CHANNELS
    }

    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[c * self.plane_len() + y * self.width + x]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    /// Apply a per-channel scalar map, producing a new image.
    pub fn map_planes(&self, mut f: impl FnMut(usize, f32) -> f32) -> Self {
        let n = self.plane_len();
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i / n.max(1), v))
            .collect();
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// What a pixel buffer represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorRole {
    Srgb,
    Raw,
    PseudoRaw,
    UpdatedSrgb,
}

/// Provenance attached by the operation that produced an image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub source: String,
    pub role: ColorRole,
    pub seed: Option<u64>,
}

impl ImageMeta {
    pub fn new(source: impl Into<String>, role: ColorRole, seed: Option<u64>) -> Self {
        Self {
            source: source.into(),
            role,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepthHint {
    #[default]
    Auto,
    Eight,
    Sixteen,
    Float,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaveFormat {
    Png8,
    Png16,
    F32,
}

impl SaveFormat {
    pub fn extension(self) -> &'static str {
        match self {
            SaveFormat::Png8 | SaveFormat::Png16 => "png",
            SaveFormat::F32 => "rft",
        }
    }
}

fn check_dimension(d: u64) -> Result<()> {
    if d > MAX_DIMENSION {
        Err(Error::DimensionOverflow(d))
    } else {
        Ok(())
    }
}

pub fn load_image(path: impl AsRef<Path>, hint: BitDepthHint) -> Result<PlanarImage> {
    let path = path.as_ref();
    let mut file = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut magic = [0u8; 4];
    let peeked = read_up_to(&mut file, &mut magic).map_err(|e| Error::io(path, e))?;
    if peeked == 4 && &magic == CONTAINER_MAGIC {
        if !matches!(hint, BitDepthHint::Auto | BitDepthHint::Float) {
            return Err(Error::UnsupportedFormat(format!(
                "{} is a float container, requested {hint:?}",
                path.display()
            )));
        }
        return read_container_body(&mut file, path);
    }
    if hint == BitDepthHint::Float {
        return Err(Error::UnsupportedFormat(format!(
            "{} is not a float container",
            path.display()
        )));
    }
    let mut bytes = magic[..peeked].to_vec();
    file.read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_png(&bytes, hint, path)
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

fn read_container_body(r: &mut impl Read, path: &Path) -> Result<PlanarImage> {
    let mut header = [0u8; 12];
    if read_up_to(r, &mut header).map_err(|e| Error::io(path, e))? != 12 {
        return Err(Error::CorruptHeader(format!(
            "{}: truncated container header",
            path.display()
        )));
    }
    let field = |i: usize| u32::from_le_bytes(header[i * 4..i * 4 + 4].try_into().unwrap());
    let (width, height, channels) = (field(0), field(1), field(2));
    check_dimension(width as u64)?;
    check_dimension(height as u64)?;
    if channels != PlanarImage::CHANNELS as u32 {
        return Err(Error::CorruptHeader(format!(
            "{}: {channels} channels, expected 3",
            path.display()
        )));
    }
    let count = width as usize * height as usize * PlanarImage::CHANNELS;
    let mut raw = vec![0u8; count * 4];
    if read_up_to(r, &mut raw).map_err(|e| Error::io(path, e))? != raw.len() {
        return Err(Error::CorruptHeader(format!(
            "{}: pixel payload shorter than header declares",
            path.display()
        )));
    }
    let data = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    PlanarImage::new(width as usize, height as usize, data)
}

fn decode_png(bytes: &[u8], hint: BitDepthHint, path: &Path) -> Result<PlanarImage> {
    let format = image::guess_format(bytes)
        .map_err(|_| Error::UnsupportedFormat(format!("{}: unknown format", path.display())))?;
    if format != ImageFormat::Png {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {format:?} is not supported",
            path.display()
        )));
    }
    let decoded = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::CorruptHeader(format!("{}: {e}", path.display())))?;
    let sixteen = match decoded.color().bytes_per_pixel() / decoded.color().channel_count() {
        1 => false,
        2 => true,
        _ => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: only 8/16-bit PNG is supported",
                path.display()
            )))
        }
    };
    match (hint, sixteen) {
        (BitDepthHint::Eight, true) | (BitDepthHint::Sixteen, false) => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: bit depth does not match requested {hint:?}",
                path.display()
            )))
        }
        _ => {}
    }
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    check_dimension(w as u64)?;
    check_dimension(h as u64)?;
    let n = w * h;
    let mut data = vec![0f32; n * 3];
    if sixteen {
        let rgb = decoded.to_rgb16();
        for (i, px) in rgb.pixels().enumerate() {
            for c in 0..3 {
                data[c * n + i] = px[c] as f32 / 65535.0;
            }
        }
    } else {
        let rgb = decoded.to_rgb8();
        for (i, px) in rgb.pixels().enumerate() {
            for c in 0..3 {
                data[c * n + i] = px[c] as f32 / 255.0;
            }
        }
    }
    PlanarImage::new(w, h, data)
}

/// Clamp to `[0,1]` and quantize with round-half-up.
pub fn quantize(v: f32, max: u32) -> u32 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) } as f64;
    (v * max as f64 + 0.5).floor() as u32
}

pub fn save_image(img: &PlanarImage, path: impl AsRef<Path>, format: SaveFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        SaveFormat::F32 => write_container(img, path),
        SaveFormat::Png8 => {
            let buf = interleave(img, |v| quantize(v, 255) as u8);
            let out: ImageBuffer<Rgb<u8>, _> =
                ImageBuffer::from_raw(img.width as u32, img.height as u32, buf).unwrap();
            write_png(DynamicImage::ImageRgb8(out), path)
        }
        SaveFormat::Png16 => {
            let buf = interleave(img, |v| quantize(v, 65535) as u16);
            let out: ImageBuffer<Rgb<u16>, _> =
                ImageBuffer::from_raw(img.width as u32, img.height as u32, buf).unwrap();
            write_png(DynamicImage::ImageRgb16(out), path)
        }
    }
}

fn interleave<T: Copy + Default>(img: &PlanarImage, q: impl Fn(f32) -> T) -> Vec<T> {
    let n = img.plane_len();
    let mut buf = vec![T::default(); n * 3];
    for c in 0..3 {
        for (i, &v) in img.plane(c).iter().enumerate() {
            buf[i * 3 + c] = q(v);
        }
    }
    buf
}

fn write_png(img: DynamicImage, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    img.write_to(&mut w, ImageFormat::Png).map_err(|e| {
        Error::io(
            path,
            std::io::Error::other(e.to_string()),
        )
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_container(img: &PlanarImage, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    write(CONTAINER_MAGIC)?;
    write(&(img.width as u32).to_le_bytes())?;
    write(&(img.height as u32).to_le_bytes())?;
    write(&(PlanarImage::CHANNELS as u32).to_le_bytes())?;
    for v in &img.data {
        write(&v.to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Resample to `out_w`×`out_h`: area averaging along axes that shrink, bilinear
/// (pixel-center aligned, edge-clamped) along axes that grow.
pub fn resize_area(img: &PlanarImage, out_w: usize, out_h: usize) -> Result<PlanarImage> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidParams(format!(
            "resize target {out_w}x{out_h} must be at least 1x1"
        )));
    }
    check_dimension(out_w as u64)?;
    check_dimension(out_h as u64)?;
    if out_w == img.width && out_h == img.height {
        return Ok(img.clone());
    }
    let wx = resample_weights(img.width, out_w);
    let wy = resample_weights(img.height, out_h);
    let mut data = Vec::with_capacity(out_w * out_h * 3);
    let mut rows = vec![0f64; out_w * img.height];
    for c in 0..3 {
        let plane = img.plane(c);
        // horizontal pass
        for y in 0..img.height {
            let row = &plane[y * img.width..(y + 1) * img.width];
            for (ox, taps) in wx.iter().enumerate() {
                rows[y * out_w + ox] = taps.iter().map(|&(i, w)| row[i] as f64 * w).sum();
            }
        }
        // vertical pass
        for taps in &wy {
            for ox in 0..out_w {
                let v: f64 = taps.iter().map(|&(i, w)| rows[i * out_w + ox] * w).sum();
                data.push(v as f32);
            }
        }
    }
    PlanarImage::new(out_w, out_h, data)
}

/// Per-output-sample list of (input index, weight); weights sum to 1.
fn resample_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    if n_out == n_in {
        return (0..n_in).map(|i| vec![(i, 1.0)]).collect();
    }
    if n_out < n_in {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let lo = o as f64 * scale;
                let hi = lo + scale;
                let first = lo.floor() as usize;
                let last = (hi.ceil() as usize).min(n_in);
                (first..last)
                    .filter_map(|i| {
                        let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                        (overlap > 0.0).then_some((i, overlap / scale))
                    })
                    .collect()
            })
            .collect()
    } else {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                let t = src - i0 as f64;
                if i1 == i0 || t == 0.0 {
                    vec![(i0, 1.0)]
                } else {
                    vec![(i0, 1.0 - t), (i1, t)]
                }
            })
            .collect()
    }
}

/// Default output path helper: `dir/stem.ext`.
pub fn output_path(dir: &Path, stem: &str, format: SaveFormat) -> PathBuf {
    dir.join(format!("{stem}.{}", format.extension()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantizer_rounds_half_up_and_clamps() {
        assert_eq!(quantize(0.5, 255), 128);
        assert_eq!(quantize(1.2, 65535), 65535);
        assert_eq!(quantize(-0.1, 255), 0);
        assert_eq!(quantize(1.0, 255), 255);
        assert_eq!(quantize(f32::NAN, 255), 0);
    }

    #[test]
    fn png8_full_scale_loads_as_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = PlanarImage::from_fn(3, 2, |c, x, _| if c == 0 && x == 0 { 1.0 } else { 0.5 }).unwrap();
        save_image(&img, &path, SaveFormat::Png8).unwrap();
        let back = load_image(&path, BitDepthHint::Auto).unwrap();
        assert_eq!(back.get(0, 0, 0), 1.0);
        assert_eq!(back.get(1, 0, 0), 128.0 / 255.0);
        assert!(matches!(
            load_image(&path, BitDepthHint::Sixteen),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn png16_zero_and_clamp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = PlanarImage::from_fn(2, 2, |c, _, _| [0.0, 1.2, -0.3][c]).unwrap();
        save_image(&img, &path, SaveFormat::Png16).unwrap();
        let back = load_image(&path, BitDepthHint::Sixteen).unwrap();
        assert_eq!(back.plane(0), &[0.0; 4]);
        assert_eq!(back.plane(1), &[1.0; 4]);
        assert_eq!(back.plane(2), &[0.0; 4]);
    }

    #[test]
    fn png_interleave_transposes_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = PlanarImage::from_fn(4, 3, |c, x, y| (c * 12 + y * 4 + x) as f32 / 255.0).unwrap();
        save_image(&img, &path, SaveFormat::Png8).unwrap();
        let raw = image::open(&path).unwrap().to_rgb8();
        assert_eq!(raw.get_pixel(1, 2).0, [9, 21, 33]);
        assert_eq!(load_image(&path, BitDepthHint::Eight).unwrap(), img);
    }

    #[test]
    fn container_rejects_truncation_and_bad_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.rft");
        let img = PlanarImage::filled(4, 4, 0.25).unwrap();
        save_image(&img, &path, SaveFormat::F32).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 16 + 4 * 4 * 3 * 4);

        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_image(&path, BitDepthHint::Auto), Err(Error::CorruptHeader(_))));

        let mut bad = bytes.clone();
        bad[12..16].copy_from_slice(&4u32.to_le_bytes());
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_image(&path, BitDepthHint::Auto), Err(Error::CorruptHeader(_))));

        let mut huge = bytes.clone();
        huge[4..8].copy_from_slice(&((1u32 << 24) + 1).to_le_bytes());
        std::fs::write(&path, &huge).unwrap();
        assert!(matches!(
            load_image(&path, BitDepthHint::Auto),
            Err(Error::DimensionOverflow(_))
        ));

        std::fs::write(&path, b"GIF89a...").unwrap();
        assert!(matches!(
            load_image(&path, BitDepthHint::Auto),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn resize_box_mean() {
        let img = PlanarImage::new(2, 2, [0.0, 1.0, 0.0, 1.0].repeat(3)).unwrap();
        let out = resize_area(&img, 1, 1).unwrap();
        assert_eq!(out.data(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn resize_identity_is_bit_identical() {
        let img = PlanarImage::from_fn(5, 3, |c, x, y| (c + x * y) as f32 * 0.137).unwrap();
        assert_eq!(resize_area(&img, 5, 3).unwrap(), img);
    }

    #[test]
    fn resize_preserves_constants() {
        let img = PlanarImage::filled(37, 23, 0.3).unwrap();
        for (w, h) in [(10, 7), (128, 96), (37, 50), (1, 1), (80, 5)] {
            let out = resize_area(&img, w, h).unwrap();
            assert!(out.data().iter().all(|&v| (v - 0.3).abs() <= 1e-7), "{w}x{h}");
        }
    }

    #[test]
    fn resize_rejects_zero_target() {
        let img = PlanarImage::filled(2, 2, 0.0).unwrap();
        assert!(resize_area(&img, 0, 1).is_err());
    }

    #[test]
    fn area_weights_sum_to_one() {
        for (a, b) in [(10, 3), (7, 7), (3, 10), (640, 128), (5, 2)] {
            for taps in resample_weights(a, b) {
                let s: f64 = taps.iter().map(|t| t.1).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}
