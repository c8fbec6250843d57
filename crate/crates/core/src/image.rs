//! Grayscale image container and the small set of numerical primitives the
//! rest of the pipeline is built from: Gaussian kernels, zero-padded separable
//! convolution, bilinear sampling and thresholding.

use crate::error::{Error, Result};

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// An all-black image.
    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        check_dims(height, width)?;
        Ok(Self {
            height,
            width,
            pixels: vec![0.0; height * width],
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        let mut img = Self::zeros(height, width)?;
        img.pixels.fill(value.clamp(0.0, 1.0));
        Ok(img)
    }

    /// Builds an image from row-major pixels. Values are clamped into `[0, 1]`;
    /// non-finite values are rejected.
    pub fn from_pixels(height: usize, width: usize, mut pixels: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if pixels.len() != height * width {
            return Err(Error::Shape(format!(
                "{} pixels supplied for a {height}x{width} image",
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("pixel {i} is not finite")));
        }
        clamp_unit(&mut pixels);
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    /// Builds an image from 8-bit samples, scaling by 1/255.
    pub fn from_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        let pixels = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        Self::from_pixels(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Sets a pixel, clamping the value into `[0, 1]`.
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.pixels[row * self.width + col] = value.clamp(0.0, 1.0);
    }

    /// Applies `f` to every pixel and clamps the result.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let mut pixels: Vec<f64> = self.pixels.iter().map(|&v| f(v)).collect();
        clamp_unit(&mut pixels);
        Self {
            height: self.height,
            width: self.width,
            pixels,
        }
    }

    /// Quantizes to bytes with `round(v * 255)`, ties rounding up.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| quantize(v)).collect()
    }

    pub fn total_intensity(&self) -> f64 {
        self.pixels.iter().sum()
    }
}

/// The single quantization rule used everywhere a `[0, 1]` intensity becomes a byte.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Shape(format!(
            "image dimensions must be positive, got {height}x{width}"
        )));
    }
    Ok(())
}

fn clamp_unit(pixels: &mut [f64]) {
    for v in pixels {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Real-valued H×W grid without range restrictions (displacement fields,
/// distance maps).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Binary image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    /// Out-of-bounds coordinates read as background.
    #[inline]
    pub fn get_signed(&self, row: isize, col: isize) -> bool {
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width {
            return false;
        }
        self.get(row as usize, col as usize)
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Inclusive bounding box `(row_min, row_max, col_min, col_max)` of set pixels.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    bbox = Some(match bbox {
                        None => (r, r, c, c),
                        Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
                    });
                }
            }
        }
        bbox
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / w, i % w))
    }
}

/// Symmetric, normalized 1-D kernel with `2 * radius + 1` taps.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel1D {
    radius: usize,
    weights: Vec<f64>,
}

impl Kernel1D {
    /// The identity kernel (single unit tap).
    pub fn delta() -> Self {
        Self {
            radius: 0,
            weights: vec![1.0],
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Gaussian kernel truncated at `ceil(3 sigma)` and renormalized to unit sum.
pub fn gaussian_kernel(sigma: f64) -> Result<Kernel1D> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::invalid(format!(
            "gaussian sigma must be positive and finite, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let two_var = 2.0 * sigma * sigma;
    let mut weights: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let k = i as f64 - radius as f64;
            (-k * k / two_var).exp()
        })
        .collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    // Mirror to make symmetry exact regardless of summation rounding.
    for i in 0..radius {
        weights[2 * radius - i] = weights[i];
    }
    Ok(Kernel1D { radius, weights })
}

/// Horizontal then vertical pass with the same kernel, zero padding at the
/// borders, no clamping.
pub fn convolve_field(values: &[f64], height: usize, width: usize, k: &Kernel1D) -> Vec<f64> {
    debug_assert_eq!(values.len(), height * width);
    let r = k.radius as isize;
    let w = k.weights();
    let mut tmp = vec![0.0; height * width];
    for row in 0..height {
        let src = &values[row * width..(row + 1) * width];
        let dst = &mut tmp[row * width..(row + 1) * width];
        for (c, out) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, &wt) in w.iter().enumerate() {
                let cc = c as isize + t as isize - r;
                if cc >= 0 && (cc as usize) < width {
                    acc += wt * src[cc as usize];
                }
            }
            *out = acc;
        }
    }
    let mut out = vec![0.0; height * width];
    for row in 0..height {
        for (t, &wt) in w.iter().enumerate() {
            let rr = row as isize + t as isize - r;
            if rr < 0 || rr as usize >= height {
                continue;
            }
            let src = &tmp[rr as usize * width..(rr as usize + 1) * width];
            let dst = &mut out[row * width..(row + 1) * width];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += wt * s;
            }
        }
    }
    out
}

/// Separable convolution of an image; output is clamped into `[0, 1]`.
pub fn convolve_separable(img: &GrayImage, k: &Kernel1D) -> GrayImage {
    let mut pixels = convolve_field(&img.pixels, img.height, img.width, k);
    clamp_unit(&mut pixels);
    GrayImage {
        height: img.height,
        width: img.width,
        pixels,
    }
}

/// Bilinear interpolation at `(x, y)` = (column, row). Lattice points outside
/// the image contribute background 0.
pub fn bilinear_sample(img: &GrayImage, x: f64, y: f64) -> f64 {
    if !x.is_finite() || !y.is_finite() {
        return 0.0;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let at = |r: i64, c: i64| -> f64 {
        if r < 0 || c < 0 || r >= img.height as i64 || c >= img.width as i64 {
            0.0
        } else {
            img.get(r as usize, c as usize)
        }
    };
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
    let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
    (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0)
}

/// Foreground mask of pixels strictly brighter than `threshold`.
pub fn binarize(img: &GrayImage, threshold: f64) -> Result<Mask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    Ok(Mask {
        height: img.height,
        width: img.width,
        bits: img.pixels.iter().map(|&v| v > threshold).collect(),
    })
}
