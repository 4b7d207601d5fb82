//! Deterministic low-level raster operations.
//!
//! Single-channel intensity images with values in `[0, 1]`, stored row-major.
//! All operations are pure: the same inputs (seeds included) produce
//! bit-identical outputs, and every arithmetic result is clamped back into
//! `[0, 1]`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

/// Seed for a deterministic noise stream. Same seed, same stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub(crate) fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Derives a child seed; used to fan one master seed out to independent
    /// per-sample streams without correlation.
    pub fn derive(self, stream: u64) -> RngSeed {
        // splitmix64 step over (seed, stream)
        let mut z = self
            .0
            .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(stream.wrapping_add(1)));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        RngSeed(z ^ (z >> 31))
    }
}

/// Single-channel intensity raster, values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl EyeImage {
    /// Builds an image from raw samples. Values are clamped into `[0, 1]`.
    pub fn from_data(width: usize, height: usize, mut data: Vec<f64>) -> Result<EyeImage> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(
                "image dimensions must be at least 1x1".into(),
            ));
        }
        if data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(EyeImage {
            width,
            height,
            data,
        })
    }

    /// Constant-intensity image.
    pub fn filled(width: usize, height: usize, value: f64) -> EyeImage {
        EyeImage {
            width,
            height,
            data: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    /// Pixel lookup with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    /// Bilinear sample at subpixel coordinates, edge-replicated.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let x0 = x0 as isize;
        let y0 = y0 as isize;
        let v00 = self.get_clamped(x0, y0);
        let v10 = self.get_clamped(x0 + 1, y0);
        let v01 = self.get_clamped(x0, y0 + 1);
        let v11 = self.get_clamped(x0 + 1, y0 + 1);
        (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
    }

    /// Copies the axis-aligned rectangle starting at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<EyeImage> {
        if x0 + w > self.width || y0 + h > self.height || w == 0 || h == 0 {
            return Err(Error::InvalidParameter(format!(
                "crop {}x{}+{}+{} exceeds image {}x{}",
                w, h, x0, y0, self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + w]);
        }
        Ok(EyeImage {
            width: w,
            height: h,
            data,
        })
    }

    /// Snaps every sample to the nearest 8-bit level. Rendering runs through
    /// this so in-memory samples and PNG round-trips are bit-identical.
    pub fn quantize_u8(&mut self) {
        for v in &mut self.data {
            *v = (*v * 255.0).round() / 255.0;
        }
    }

    /// Writes an 8-bit grayscale PNG; intensity v maps to round(v*255).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf: Vec<u8> = self
            .data
            .iter()
            .map(|&v| (v * 255.0).round() as u8)
            .collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("dimensions match buffer");
        img.save(path)?;
        Ok(())
    }

    /// Loads an 8-bit grayscale PNG; intensity v maps to v/255.
    pub fn load_png(path: &Path) -> Result<EyeImage> {
        let img = image::open(path)?.into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.into_raw().iter().map(|&v| v as f64 / 255.0).collect();
        EyeImage::from_data(w, h, data)
    }

    /// Writes a binary PGM (P5, maxval 255).
    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.data.len() + 32);
        out.extend_from_slice(format!("P5\n{} {}\n255\n", self.width, self.height).as_bytes());
        out.extend(self.data.iter().map(|&v| (v * 255.0).round() as u8));
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Reads a binary PGM (P5, maxval 255).
    pub fn load_pgm(path: &Path) -> Result<EyeImage> {
        let raw = std::fs::read(path)?;
        parse_pgm(&raw)
    }
}

fn parse_pgm(raw: &[u8]) -> Result<EyeImage> {
    let bad = |m: &str| Error::InvalidParameter(format!("pgm: {m}"));
    if raw.len() < 2 || &raw[..2] != b"P5" {
        return Err(bad("not a P5 file"));
    }
    // Header: magic, width, height, maxval as whitespace-separated tokens,
    // with '#' comments; one whitespace byte after maxval, then raster.
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            while pos < raw.len() && raw[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < raw.len() && raw[pos] == b'#' {
                while pos < raw.len() && raw[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < raw.len() && raw[pos].is_ascii_digit() {
            pos += 1;
        }
        let token = std::str::from_utf8(&raw[start..pos]).map_err(|_| bad("bad header"))?;
        *field = token.parse().map_err(|_| bad("bad header number"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(bad("only maxval 255 supported"));
    }
    pos += 1; // single whitespace after maxval
    let need = width * height;
    if raw.len() < pos + need {
        return Err(bad("truncated raster"));
    }
    let data = raw[pos..pos + need]
        .iter()
        .map(|&v| v as f64 / 255.0)
        .collect();
    EyeImage::from_data(width, height, data)
}

/// Square convolution kernel with odd side length.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
    /// 1-D profile when the kernel is a normalized outer product (Gaussian);
    /// lets convolution run separably.
    profile: Option<Vec<f64>>,
}

impl Kernel {
    /// General kernel from raw weights; `weights.len()` must be `size*size`
    /// and `size` odd.
    pub fn from_weights(size: usize, weights: Vec<f64>) -> Result<Kernel> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "kernel size must be odd, got {size}"
            )));
        }
        if weights.len() != size * size {
            return Err(Error::InvalidParameter(format!(
                "kernel weights length {} != {}^2",
                weights.len(),
                size
            )));
        }
        Ok(Kernel {
            size,
            weights,
            profile: None,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Delta kernel: center 1, everything else 0.
    pub fn delta(size: usize) -> Result<Kernel> {
        let mut weights = vec![0.0; size * size];
        weights[(size / 2) * size + size / 2] = 1.0;
        Kernel::from_weights(size, weights)
    }
}

/// Discretized 2-D Gaussian, normalized to sum 1.
///
/// Side length is the nearest odd integer not less than `6*sigma + 1`
/// (exactly `6*sigma + 1` for integral sigma).
pub fn gaussian_kernel(sigma: f64) -> Result<Kernel> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    let mut size = (6.0 * sigma + 1.0).ceil() as usize;
    if size % 2 == 0 {
        size += 1;
    }
    let half = (size / 2) as isize;
    let mut profile = Vec::with_capacity(size);
    for i in -half..=half {
        profile.push((-((i * i) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let sum1d: f64 = profile.iter().sum();
    for v in &mut profile {
        *v /= sum1d;
    }
    let mut weights = Vec::with_capacity(size * size);
    for j in 0..size {
        for i in 0..size {
            weights.push(profile[j] * profile[i]);
        }
    }
    Ok(Kernel {
        size,
        weights,
        profile: Some(profile),
    })
}

/// Convolves with edge replication at the borders; output is clamped to
/// `[0, 1]` and keeps the input dimensions.
///
/// Kernels carrying a separable profile run as two 1-D passes, which is
/// exact for edge replication because clamping rows and columns commutes.
pub fn convolve2d(image: &EyeImage, kernel: &Kernel) -> Result<EyeImage> {
    if kernel.size > image.width || kernel.size > image.height {
        return Err(Error::InvalidParameter(format!(
            "kernel size {} exceeds image {}x{}",
            kernel.size, image.width, image.height
        )));
    }
    let (w, h) = (image.width, image.height);
    let half = (kernel.size / 2) as isize;
    let mut out = vec![0.0f64; w * h];

    if let Some(profile) = &kernel.profile {
        // horizontal pass
        let mut tmp = vec![0.0f64; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &p) in profile.iter().enumerate() {
                    let sx = (x as isize + half - k as isize).clamp(0, w as isize - 1) as usize;
                    acc += p * image.data[y * w + sx];
                }
                tmp[y * w + x] = acc;
            }
        }
        // vertical pass
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &p) in profile.iter().enumerate() {
                    let sy = (y as isize + half - k as isize).clamp(0, h as isize - 1) as usize;
                    acc += p * tmp[sy * w + x];
                }
                out[y * w + x] = acc.clamp(0.0, 1.0);
            }
        }
    } else {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for j in 0..kernel.size {
                    let sy = (y as isize + half - j as isize).clamp(0, h as isize - 1) as usize;
                    for i in 0..kernel.size {
                        let sx = (x as isize + half - i as isize).clamp(0, w as isize - 1) as usize;
                        acc += kernel.weights[j * kernel.size + i] * image.data[sy * w + sx];
                    }
                }
                out[y * w + x] = acc.clamp(0.0, 1.0);
            }
        }
    }
    EyeImage::from_data(w, h, out)
}

/// Adds zero-mean Gaussian noise with the given sigma, clamped, seeded.
pub fn add_gaussian_noise(image: &EyeImage, sigma: f64, seed: RngSeed) -> Result<EyeImage> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise sigma must be nonnegative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut rng = seed.rng();
    let data = image
        .data
        .iter()
        .map(|&v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0))
        .collect();
    EyeImage::from_data(image.width, image.height, data)
}

/// Resampling method for `resample` / `upsample_to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMethod {
    Nearest,
    Bilinear,
}

/// Shrinks the image by `scale >= 1`: output pixel (x', y') reads the source
/// at (scale*x', scale*y'), rounded for nearest or interpolated for bilinear.
pub fn resample(image: &EyeImage, scale: f64, method: ResampleMethod) -> Result<EyeImage> {
    if !(scale >= 1.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "scale must be >= 1, got {scale}"
        )));
    }
    let out_w = (image.width as f64 / scale).floor() as usize;
    let out_h = (image.height as f64 / scale).floor() as usize;
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidParameter(format!(
            "scale {} collapses {}x{} to zero size",
            scale, image.width, image.height
        )));
    }
    if scale == 1.0 {
        return Ok(image.clone());
    }
    let mut data = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let sx = scale * x as f64;
            let sy = scale * y as f64;
            let v = match method {
                ResampleMethod::Nearest => {
                    image.get_clamped(sx.round() as isize, sy.round() as isize)
                }
                ResampleMethod::Bilinear => image.sample_bilinear(sx, sy),
            };
            data.push(v);
        }
    }
    EyeImage::from_data(out_w, out_h, data)
}

/// Resamples to exact target dimensions (the inverse direction of
/// `resample`, used to restore a downsampled patch to its original size).
pub fn upsample_to(
    image: &EyeImage,
    width: usize,
    height: usize,
    method: ResampleMethod,
) -> Result<EyeImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(
            "target dimensions must be nonzero".into(),
        ));
    }
    if width == image.width && height == image.height {
        return Ok(image.clone());
    }
    let sx = image.width as f64 / width as f64;
    let sy = image.height as f64 / height as f64;
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let fx = sx * x as f64;
            let fy = sy * y as f64;
            let v = match method {
                ResampleMethod::Nearest => {
                    image.get_clamped(fx.floor() as isize, fy.floor() as isize)
                }
                ResampleMethod::Bilinear => image.sample_bilinear(fx, fy),
            };
            data.push(v);
        }
    }
    EyeImage::from_data(width, height, data)
}

/// Binary raster used for masked compositing and glint bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> BinaryMask {
        BinaryMask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf: Vec<u8> = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("dimensions match buffer");
        img.save(path)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<BinaryMask> {
        let img = image::open(path)?.into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.into_raw().iter().map(|&v| v > 127).collect();
        Ok(BinaryMask {
            width: w,
            height: h,
            data,
        })
    }
}

/// Replaces `base` pixels with `patch` pixels wherever `mask` is set;
/// `offset` places the patch inside the base image.
pub fn composite(
    base: &EyeImage,
    patch: &EyeImage,
    mask: &BinaryMask,
    offset: (usize, usize),
) -> Result<EyeImage> {
    if mask.width != patch.width || mask.height != patch.height {
        return Err(Error::InvalidParameter(format!(
            "mask {}x{} does not match patch {}x{}",
            mask.width, mask.height, patch.width, patch.height
        )));
    }
    let (ox, oy) = offset;
    if ox + patch.width > base.width || oy + patch.height > base.height {
        return Err(Error::InvalidParameter(format!(
            "patch {}x{}+{}+{} exceeds base {}x{}",
            patch.width, patch.height, ox, oy, base.width, base.height
        )));
    }
    let mut out = base.clone();
    for y in 0..patch.height {
        for x in 0..patch.width {
            if mask.get(x, y) {
                out.data[(oy + y) * base.width + (ox + x)] = patch.data[y * patch.width + x];
            }
        }
    }
    Ok(out)
}
