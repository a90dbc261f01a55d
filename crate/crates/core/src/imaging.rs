//! Image containers, pixel/focal coordinate mapping, bilinear warping,
//! pyramids, gradients, noise injection and frame I/O.
//!
//! Pixel coordinates: `i` is the column (x direction), `j` the row
//! (y direction); samples are stored row-major. Intensities are real-valued
//! with nominal range `[0, 255]`.

use std::io::Write as _;
use std::path::Path;

use rand::seq::index::sample as index_sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowmodel::DepthBounds;
use crate::geometry::ProjectiveMap;
use crate::scalar::{real, to_f64, Real};

/// Largest usable image extent in focal units for the planar model.
pub const MAX_DOMAIN_L: f64 = 8.0;

// ---------------------------------------------------------------------------
// Containers
// ---------------------------------------------------------------------------

/// Single-channel intensity raster with real-valued samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer<S> {
    width: usize,
    height: usize,
    samples: Vec<S>,
}

impl<S: Real> ImageBuffer<S> {
    pub fn filled(width: usize, height: usize, value: S) -> Self {
        Self {
            width,
            height,
            samples: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut samples = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                samples.push(f(i, j));
            }
        }
        Self {
            width,
            height,
            samples,
        }
    }

    pub fn from_samples(width: usize, height: usize, samples: Vec<S>) -> Result<Self> {
        if samples.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} image needs {} samples, got {}",
                width,
                height,
                width * height,
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[S] {
        &self.samples
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.samples[j * self.width + i]
    }

    pub fn mean(&self) -> S {
        let n = real::<S>(self.samples.len() as f64);
        self.samples.iter().fold(S::zero(), |acc, &v| acc + v) / n
    }

    /// Copy out the `w x h` window with top-left corner `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::DimensionMismatch(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        Ok(Self::from_fn(w, h, |i, j| self.get(x0 + i, y0 + j)))
    }
}

/// Pixel-to-focal mapping: `x = (i - cx) / focal_px`, `y = (j - cy) / focal_px`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics<S> {
    pub focal_px: S,
    pub cx: S,
    pub cy: S,
}

impl<S: Real> Intrinsics<S> {
    /// Synthetic-sequence default: 90 degree view angle (so the larger image
    /// extent spans 2 focal units) with the principal point at the image
    /// center.
    pub fn synthetic(width: usize, height: usize) -> Self {
        let focal_px = real::<S>(width.max(height) as f64) * real(0.5);
        Self {
            focal_px,
            cx: real::<S>((width - 1) as f64) * real(0.5),
            cy: real::<S>((height - 1) as f64) * real(0.5),
        }
    }

    /// Check this calibration against an image size; the usable extent
    /// `L = max(width, height) / focal_px` must not exceed 8 focal units.
    pub fn validate_for(&self, width: usize, height: usize) -> Result<()> {
        if !(self.focal_px > S::zero()) {
            return Err(Error::BadIntrinsics(format!(
                "focal_px must be positive, got {}",
                to_f64(self.focal_px)
            )));
        }
        let l = self.domain_l(width, height);
        if l > real(MAX_DOMAIN_L) {
            return Err(Error::BadIntrinsics(format!(
                "image extent L = {} focal units exceeds {}",
                to_f64(l),
                MAX_DOMAIN_L
            )));
        }
        Ok(())
    }

    /// Image extent in focal units: `max(width, height) / focal_px`.
    pub fn domain_l(&self, width: usize, height: usize) -> S {
        real::<S>(width.max(height) as f64) / self.focal_px
    }

    #[inline]
    pub fn pixel_to_focal(&self, pt: (S, S)) -> (S, S) {
        ((pt.0 - self.cx) / self.focal_px, (pt.1 - self.cy) / self.focal_px)
    }

    #[inline]
    pub fn focal_to_pixel(&self, pt: (S, S)) -> (S, S) {
        (pt.0 * self.focal_px + self.cx, pt.1 * self.focal_px + self.cy)
    }

    /// Intrinsics of the next-coarser pyramid level (everything halves, so
    /// focal-unit coordinates are preserved exactly under decimation by 2).
    pub fn level_down(&self) -> Self {
        let half = real::<S>(0.5);
        Self {
            focal_px: self.focal_px * half,
            cx: self.cx * half,
            cy: self.cy * half,
        }
    }
}

/// Per-pixel flag recording whether a warped sample fell inside the source
/// image.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl ValidityMask {
    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[j * self.width + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[j * self.width + i] = v;
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Fraction of pixels marked valid.
    pub fn coverage(&self) -> f64 {
        let n = self.bits.iter().filter(|&&b| b).count();
        n as f64 / self.bits.len().max(1) as f64
    }
}

/// Per-pixel scene depth in focal units; all entries strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthField<S> {
    width: usize,
    height: usize,
    z: Vec<S>,
}

impl<S: Real> DepthField<S> {
    pub fn constant(width: usize, height: usize, z: S) -> Self {
        assert!(z > S::zero(), "depth must be positive");
        Self {
            width,
            height,
            z: vec![z; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut z = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                let v = f(i, j);
                assert!(v > S::zero(), "depth must be positive");
                z.push(v);
            }
        }
        Self { width, height, z }
    }

    /// Uniform random depths in `[z_min, z_max]`, reproducible per seed.
    pub fn random_uniform(width: usize, height: usize, z_min: S, z_max: S, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (to_f64(z_min), to_f64(z_max));
        Self::from_fn(width, height, |_, _| real(rng.gen_range(lo..=hi)))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.z[j * self.width + i]
    }

    pub fn bounds(&self) -> Result<DepthBounds<S>> {
        let mut z_inf = S::infinity();
        let mut z_sup = S::zero();
        for &v in &self.z {
            z_inf = z_inf.min(v);
            z_sup = z_sup.max(v);
        }
        DepthBounds::new(z_inf, z_sup)
    }
}

// ---------------------------------------------------------------------------
// Sampling and warping
// ---------------------------------------------------------------------------

/// Bilinear sample at real pixel coordinates, clamped to the image
/// rectangle. Exact at integer coordinates.
pub fn sample_bilinear<S: Real>(img: &ImageBuffer<S>, x: S, y: S) -> S {
    sample_bilinear_with_gradient(img, x, y).0
}

/// Bilinear sample plus the derivative of the interpolant with respect to
/// the sampling position (gray levels per pixel). The gradient is the slope
/// of the interpolation cell, which makes analytic derivatives of
/// warped-image residuals agree with finite differences exactly.
pub fn sample_bilinear_with_gradient<S: Real>(img: &ImageBuffer<S>, x: S, y: S) -> (S, S, S) {
    let w = img.width();
    let h = img.height();
    let max_x = real::<S>((w - 1) as f64);
    let max_y = real::<S>((h - 1) as f64);
    let x = x.max(S::zero()).min(max_x);
    let y = y.max(S::zero()).min(max_y);
    let x0 = to_f64(x.floor()) as usize;
    let y0 = to_f64(y.floor()) as usize;
    let x0 = x0.min(w.saturating_sub(2));
    let y0 = y0.min(h.saturating_sub(2));
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - real(x0 as f64);
    let fy = y - real(y0 as f64);
    let v00 = img.get(x0, y0);
    let v10 = img.get(x1, y0);
    let v01 = img.get(x0, y1);
    let v11 = img.get(x1, y1);
    let one = S::one();
    let value = (one - fy) * ((one - fx) * v00 + fx * v10) + fy * ((one - fx) * v01 + fx * v11);
    let gx = (one - fy) * (v10 - v00) + fy * (v11 - v01);
    let gy = (one - fx) * (v01 - v00) + fx * (v11 - v10);
    (value, gx, gy)
}

/// Warp an image by a projective map of the focal-unit plane.
///
/// The map describes where scene content moves: the output satisfies
/// `out(map(p)) = src(p)`. Rendering is destination-driven: each output
/// pixel is converted to focal units, sent through the *inverse* of `map`,
/// converted back to pixels and bilinearly sampled. The mask is false where
/// that source location fell outside the source rectangle (such output
/// pixels are set to zero).
pub fn warp_image<S: Real>(
    src: &ImageBuffer<S>,
    map: &ProjectiveMap<S>,
    intr: &Intrinsics<S>,
) -> Result<(ImageBuffer<S>, ValidityMask)> {
    let inv = map.inverse()?;
    let (w, h) = (src.width(), src.height());
    let mut out = ImageBuffer::filled(w, h, S::zero());
    let mut mask = ValidityMask::filled(w, h, false);
    let max_x = real::<S>((w - 1) as f64);
    let max_y = real::<S>((h - 1) as f64);
    for j in 0..h {
        for i in 0..w {
            let dest = intr.pixel_to_focal((real(i as f64), real(j as f64)));
            let srcpt = inv.apply(dest)?;
            let (px, py) = intr.focal_to_pixel(srcpt);
            let inside =
                px >= S::zero() && px <= max_x && py >= S::zero() && py <= max_y;
            if inside {
                out.samples[j * w + i] = sample_bilinear(src, px, py);
                mask.set(i, j, true);
            }
        }
    }
    Ok((out, mask))
}

// ---------------------------------------------------------------------------
// Pyramid and gradients
// ---------------------------------------------------------------------------

/// 5-tap binomial smoothing (1, 4, 6, 4, 1)/16, applied separably with
/// edge clamping.
pub fn smooth_binomial<S: Real>(img: &ImageBuffer<S>) -> ImageBuffer<S> {
    let (w, h) = (img.width(), img.height());
    let k = [
        real::<S>(1.0 / 16.0),
        real(4.0 / 16.0),
        real(6.0 / 16.0),
        real(4.0 / 16.0),
        real(1.0 / 16.0),
    ];
    let mut tmp = vec![S::zero(); w * h];
    for j in 0..h {
        for i in 0..w {
            let mut acc = S::zero();
            for (o, &kv) in k.iter().enumerate() {
                let ii = (i as isize + o as isize - 2).clamp(0, w as isize - 1) as usize;
                acc = acc + kv * img.get(ii, j);
            }
            tmp[j * w + i] = acc;
        }
    }
    let mut out = ImageBuffer::filled(w, h, S::zero());
    for j in 0..h {
        for i in 0..w {
            let mut acc = S::zero();
            for (o, &kv) in k.iter().enumerate() {
                let jj = (j as isize + o as isize - 2).clamp(0, h as isize - 1) as usize;
                acc = acc + kv * tmp[jj * w + i];
            }
            out.samples[j * w + i] = acc;
        }
    }
    out
}

/// Binomial smoothing followed by decimation by two (even indices kept).
fn smooth_decimate<S: Real>(img: &ImageBuffer<S>) -> ImageBuffer<S> {
    let smoothed = smooth_binomial(img);
    let ow = img.width().div_ceil(2);
    let oh = img.height().div_ceil(2);
    ImageBuffer::from_fn(ow, oh, |i, j| smoothed.get(i * 2, j * 2))
}

/// Gaussian-style pyramid: level 0 is the input, each further level is the
/// previous one binomially smoothed and decimated by 2. Stops before either
/// dimension would drop below `min_dim`.
pub fn build_pyramid<S: Real>(img: &ImageBuffer<S>, min_dim: usize) -> Vec<ImageBuffer<S>> {
    assert!(min_dim >= 8, "min_dim must be at least 8");
    let mut levels = vec![img.clone()];
    loop {
        let last = levels.last().unwrap();
        let (nw, nh) = (last.width().div_ceil(2), last.height().div_ceil(2));
        if nw < min_dim || nh < min_dim {
            break;
        }
        levels.push(smooth_decimate(last));
    }
    levels
}

/// Central-difference gradients (one-sided at the borders), in gray levels
/// per pixel. Requires at least 3x3 input.
pub fn gradients<S: Real>(img: &ImageBuffer<S>) -> (ImageBuffer<S>, ImageBuffer<S>) {
    let (w, h) = (img.width(), img.height());
    assert!(w >= 3 && h >= 3, "gradients need at least a 3x3 image");
    let half = real::<S>(0.5);
    let gx = ImageBuffer::from_fn(w, h, |i, j| {
        if i == 0 {
            img.get(1, j) - img.get(0, j)
        } else if i == w - 1 {
            img.get(w - 1, j) - img.get(w - 2, j)
        } else {
            (img.get(i + 1, j) - img.get(i - 1, j)) * half
        }
    });
    let gy = ImageBuffer::from_fn(w, h, |i, j| {
        if j == 0 {
            img.get(i, 1) - img.get(i, 0)
        } else if j == h - 1 {
            img.get(i, h - 1) - img.get(i, h - 2)
        } else {
            (img.get(i, j + 1) - img.get(i, j - 1)) * half
        }
    });
    (gx, gy)
}

// ---------------------------------------------------------------------------
// Noise injection
// ---------------------------------------------------------------------------

/// Replace `round(level_percent/100 * w * h)` distinct pixels (chosen
/// without replacement by a seeded generator) with uniform integer gray
/// levels in `[0, 255]`. Deterministic for a fixed seed.
pub fn add_impulse_noise<S: Real>(
    img: &ImageBuffer<S>,
    level_percent: f64,
    seed: u64,
) -> ImageBuffer<S> {
    assert!(
        (0.0..=100.0).contains(&level_percent),
        "impulse level is a percentage"
    );
    let n = img.samples.len();
    let count = ((level_percent / 100.0) * n as f64).round() as usize;
    let mut out = img.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index_sample(&mut rng, n, count.min(n));
    for idx in picks {
        out.samples[idx] = real(rng.gen_range(0..=255u32) as f64);
    }
    out
}

/// Add i.i.d. zero-mean Gaussian noise of standard deviation `sigma` gray
/// levels, clamped to `[0, 255]`. Deterministic for a fixed seed.
pub fn add_gaussian_noise<S: Real>(img: &ImageBuffer<S>, sigma: f64, seed: u64) -> ImageBuffer<S> {
    assert!(sigma >= 0.0, "sigma must be nonnegative");
    if sigma == 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0f64, sigma).expect("sigma checked");
    let mut out = img.clone();
    for v in &mut out.samples {
        let noisy = to_f64(*v) + rng.sample(normal);
        *v = real(noisy.clamp(0.0, 255.0));
    }
    out
}

// ---------------------------------------------------------------------------
// Frame I/O
// ---------------------------------------------------------------------------

/// Read a frame from disk. Binary PGM (P5, maxval 255) is always supported;
/// 8-bit grayscale PNG is behind the `png` feature and selected by
/// extension.
pub fn load_image<S: Real>(path: impl AsRef<Path>) -> Result<ImageBuffer<S>> {
    let path = path.as_ref();
    #[cfg(feature = "png")]
    if path.extension().and_then(|e| e.to_str()) == Some("png") {
        return load_png(path);
    }
    let bytes = std::fs::read(path)?;
    decode_pgm(&bytes)
}

/// Write a frame to disk, rounding samples to integers and clamping to
/// `[0, 255]`. Format is chosen by extension (`.pgm` default, `.png` with
/// the `png` feature).
pub fn save_image<S: Real>(path: impl AsRef<Path>, img: &ImageBuffer<S>) -> Result<()> {
    let path = path.as_ref();
    #[cfg(feature = "png")]
    if path.extension().and_then(|e| e.to_str()) == Some("png") {
        return save_png(path, img);
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&encode_pgm(img))?;
    Ok(())
}

fn quantize<S: Real>(v: S) -> u8 {
    to_f64(v).round().clamp(0.0, 255.0) as u8
}

/// Encode as binary PGM (P5, maxval 255).
pub fn encode_pgm<S: Real>(img: &ImageBuffer<S>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.samples.iter().map(|&v| quantize(v)));
    out
}

struct PgmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PgmCursor<'a> {
    fn skip_separators(&mut self) -> Result<()> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => return Ok(()),
                None => {
                    return Err(Error::MalformedHeader {
                        offset: self.pos,
                        detail: "unexpected end of header".into(),
                    })
                }
            }
        }
    }

    fn read_number(&mut self) -> Result<usize> {
        self.skip_separators()?;
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_digit())
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::MalformedHeader {
                offset: start,
                detail: "expected a decimal number".into(),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(Error::MalformedHeader {
                offset: start,
                detail: "number out of range".into(),
            })
    }
}

/// Decode binary PGM (P5) with maxval 255. Header comments are accepted.
pub fn decode_pgm<S: Real>(bytes: &[u8]) -> Result<ImageBuffer<S>> {
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        if bytes.len() >= 2 && bytes[0] == b'P' {
            return Err(Error::UnsupportedFormat(format!(
                "only binary P5 is supported, got P{}",
                bytes[1] as char
            )));
        }
        return Err(Error::MalformedHeader {
            offset: 0,
            detail: "missing P5 magic".into(),
        });
    }
    let mut cur = PgmCursor { bytes, pos: 2 };
    let width = cur.read_number()?;
    let height = cur.read_number()?;
    let maxval = cur.read_number()?;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "maxval {maxval} not supported (need 255)"
        )));
    }
    // Exactly one whitespace byte separates the header from the samples.
    match cur.bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => {
            return Err(Error::MalformedHeader {
                offset: cur.pos,
                detail: "expected single whitespace before sample data".into(),
            })
        }
    }
    let expected = width * height;
    let data = &bytes[cur.pos..];
    if data.len() < expected {
        return Err(Error::TruncatedData {
            offset: cur.pos,
            expected,
            got: data.len(),
        });
    }
    let samples = data[..expected].iter().map(|&b| real(b as f64)).collect();
    ImageBuffer::from_samples(width, height, samples)
}

#[cfg(feature = "png")]
fn load_png<S: Real>(path: &Path) -> Result<ImageBuffer<S>> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let samples = img.into_raw().into_iter().map(|b| real(b as f64)).collect();
    ImageBuffer::from_samples(w, h, samples)
}

#[cfg(feature = "png")]
fn save_png<S: Real>(path: &Path, img: &ImageBuffer<S>) -> Result<()> {
    let raw: Vec<u8> = img.samples.iter().map(|&v| quantize(v)).collect();
    let out = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("buffer length matches dimensions");
    out.save(path)?;
    Ok(())
}
