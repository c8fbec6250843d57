//! Elastic deformation and corruption of exemplars into synthetic samples.
//!
//! A sample is a pure function of `(exemplar, params, split, label, index)`:
//! each one owns a random stream derived from those coordinates, so samples
//! can be produced in any order or on any number of workers.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::{
    bilinear_sample, convolve_field, convolve_separable, gaussian_kernel, Field, GrayImage,
};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn tag(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionKind {
    GaussianNoise,
    Blur,
    Brightness,
    SaltPepper,
}

impl CorruptionKind {
    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::Blur => "blur",
            CorruptionKind::Brightness => "brightness",
            CorruptionKind::SaltPepper => "salt_pepper",
        }
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_noise" => Ok(CorruptionKind::GaussianNoise),
            "blur" => Ok(CorruptionKind::Blur),
            "brightness" => Ok(CorruptionKind::Brightness),
            "salt_pepper" => Ok(CorruptionKind::SaltPepper),
            other => Err(Error::invalid(format!("unknown corruption kind `{other}`"))),
        }
    }
}

/// One photometric perturbation. Severity is the noise std or blur sigma,
/// the additive brightness offset in `[-1, 1]`, or the salt-and-pepper flip
/// probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: f64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: f64) -> Result<Self> {
        let spec = Self { kind, severity };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.severity;
        let ok = s.is_finite()
            && match self.kind {
                CorruptionKind::GaussianNoise | CorruptionKind::Blur => s >= 0.0,
                CorruptionKind::Brightness => (-1.0..=1.0).contains(&s),
                CorruptionKind::SaltPepper => (0.0..=1.0).contains(&s),
            };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "severity {s} out of range for {}",
                self.kind.name()
            )))
        }
    }
}

/// Parses `KIND:SEVERITY`, e.g. `blur:0.8`.
impl FromStr for CorruptionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, sev) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("corruption `{s}` is not KIND:SEVERITY")))?;
        let severity: f64 = sev
            .parse()
            .map_err(|_| Error::invalid(format!("bad severity `{sev}`")))?;
        CorruptionSpec::new(kind.parse()?, severity)
    }
}

impl fmt::Display for CorruptionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.name(), self.severity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformParams {
    pub alpha: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub corruptions: Vec<CorruptionSpec>,
    pub master_seed: u64,
}

impl Default for DeformParams {
    fn default() -> Self {
        Self {
            alpha: 8.0,
            gamma_lo: 2.0,
            gamma_hi: 2.5,
            corruptions: Vec::new(),
            master_seed: 0,
        }
    }
}

impl DeformParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::invalid(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.gamma_lo.is_finite() && self.gamma_hi.is_finite())
            || self.gamma_lo <= 0.0
            || self.gamma_lo > self.gamma_hi
        {
            return Err(Error::invalid(format!(
                "gamma range must satisfy 0 < lo <= hi, got [{}, {}]",
                self.gamma_lo, self.gamma_hi
            )));
        }
        self.corruptions
            .iter()
            .try_for_each(CorruptionSpec::validate)
    }
}

/// Draws a uniform `[-1, 1]` field and smooths it with a Gaussian of std `gamma`.
pub fn smoothed_field(height: usize, width: usize, gamma: f64, rng: &mut Stream) -> Result<Field> {
    let kernel = gaussian_kernel(gamma)?;
    let raw: Vec<f64> = (0..height * width)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    Ok(Field {
        height,
        width,
        values: convolve_field(&raw, height, width, &kernel),
    })
}

/// Displacement fields `(dx, dy)` in pixels: `dx` is drawn in full before `dy`.
pub fn displacement_fields(
    height: usize,
    width: usize,
    alpha: f64,
    gamma: f64,
    rng: &mut Stream,
) -> Result<(Field, Field)> {
    let mut dx = smoothed_field(height, width, gamma, rng)?;
    let mut dy = smoothed_field(height, width, gamma, rng)?;
    for v in dx.values.iter_mut().chain(dy.values.iter_mut()) {
        *v *= alpha;
    }
    Ok((dx, dy))
}

pub fn elastic_deform(
    img: &GrayImage,
    alpha: f64,
    gamma: f64,
    rng: &mut Stream,
) -> Result<GrayImage> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid(format!("alpha must be >= 0, got {alpha}")));
    }
    let (h, w) = (img.height(), img.width());
    let (dx, dy) = displacement_fields(h, w, alpha, gamma, rng)?;
    let mut out = GrayImage::zeros(h, w)?;
    for r in 0..h {
        for c in 0..w {
            let x = c as f64 + dx.get(r, c);
            let y = r as f64 + dy.get(r, c);
            out.set(r, c, bilinear_sample(img, x, y));
        }
    }
    Ok(out)
}

pub fn apply_corruption(
    img: &GrayImage,
    spec: &CorruptionSpec,
    rng: &mut Stream,
) -> Result<GrayImage> {
    spec.validate()?;
    let sev = spec.severity;
    Ok(match spec.kind {
        CorruptionKind::GaussianNoise => {
            let normal = Normal::new(0.0, sev).map_err(|e| Error::invalid(e.to_string()))?;
            img.map(|v| v + normal.sample(rng))
        }
        CorruptionKind::Blur if sev == 0.0 => img.clone(),
        CorruptionKind::Blur => convolve_separable(img, &gaussian_kernel(sev)?),
        CorruptionKind::Brightness => img.map(|v| v + sev),
        CorruptionKind::SaltPepper => img.map(|v| {
            let u: f64 = rng.random();
            if u < sev / 2.0 {
                1.0
            } else if u < sev {
                0.0
            } else {
                v
            }
        }),
    })
}

/// The stream owned by one synthetic sample.
pub fn example_stream(master_seed: u64, split: Split, label: u8, index: u64) -> Stream {
    rng::stream(&[
        rng::DOMAIN_EXAMPLE,
        master_seed,
        split.tag(),
        u64::from(label),
        index,
    ])
}

/// Produces sample `index` of class `label` in `split`: gamma is drawn from
/// the configured range, the exemplar is elastically warped and the
/// corruptions are applied in order.
pub fn synthesize_example(
    exemplar: &GrayImage,
    params: &DeformParams,
    split: Split,
    label: u8,
    index: u64,
) -> Result<GrayImage> {
    params.validate()?;
    let mut rng = example_stream(params.master_seed, split, label, index);
    let gamma = if params.gamma_lo == params.gamma_hi {
        params.gamma_lo
    } else {
        rng.random_range(params.gamma_lo..=params.gamma_hi)
    };
    let mut img = elastic_deform(exemplar, params.alpha, gamma, &mut rng)?;
    for spec in &params.corruptions {
        img = apply_corruption(&img, spec, &mut rng)?;
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::quantize;

    fn glyph() -> GrayImage {
        // A slanted stroke plus a bar, roughly glyph-sized.
        let mut img = GrayImage::zeros(28, 28).unwrap();
        for r in 4..24 {
            for dc in 0..3 {
                img.set(r, 8 + (r - 4) / 2 + dc, 1.0);
            }
        }
        for c in 6..22 {
            img.set(13, c, 1.0);
            img.set(14, c, 0.8);
        }
        img
    }

    #[test]
    fn zero_alpha_is_identity() {
        let img = glyph();
        let mut rng = rng::stream(&[1]);
        assert_eq!(elastic_deform(&img, 0.0, 2.0, &mut rng).unwrap(), img);
    }

    #[test]
    fn blank_stays_blank() {
        let img = GrayImage::zeros(28, 28).unwrap();
        let mut rng = rng::stream(&[2]);
        let out = elastic_deform(&img, 8.0, 2.2, &mut rng).unwrap();
        assert!(out.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_parameters() {
        let img = glyph();
        let mut rng = rng::stream(&[3]);
        assert!(elastic_deform(&img, -1.0, 2.0, &mut rng).is_err());
        assert!(elastic_deform(&img, 8.0, 0.0, &mut rng).is_err());
        let bad = DeformParams {
            gamma_lo: 3.0,
            gamma_hi: 2.0,
            ..Default::default()
        };
        assert!(synthesize_example(&img, &bad, Split::Train, 0, 0).is_err());
    }

    #[test]
    fn huge_gamma_gives_near_rigid_field() {
        let mut rng = rng::stream(&[4]);
        let (dx, dy) = displacement_fields(28, 28, 8.0, 100.0, &mut rng).unwrap();
        for f in [dx, dy] {
            let (lo, hi) = f.min_max();
            assert!(hi - lo < 0.1, "spread {}", hi - lo);
        }
    }

    #[test]
    fn corruption_identities() {
        let img = glyph();
        let mut rng = rng::stream(&[5]);
        for kind in [
            CorruptionKind::GaussianNoise,
            CorruptionKind::Blur,
            CorruptionKind::Brightness,
            CorruptionKind::SaltPepper,
        ] {
            let spec = CorruptionSpec::new(kind, 0.0).unwrap();
            assert_eq!(
                apply_corruption(&img, &spec, &mut rng).unwrap(),
                img,
                "{kind:?}"
            );
        }
        let bright = CorruptionSpec::new(CorruptionKind::Brightness, 1.0).unwrap();
        let out = apply_corruption(&img, &bright, &mut rng).unwrap();
        assert!(out.pixels().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn salt_pepper_full_severity_is_balanced() {
        // Each pixel is 1 with probability 1/2: the fraction of ones over
        // 784 pixels has std ~0.018, so 0.08 is about 4.5 std.
        let img = glyph();
        let spec = CorruptionSpec::new(CorruptionKind::SaltPepper, 1.0).unwrap();
        let mut total = 0.0;
        for seed in 0..200u64 {
            let mut rng = rng::stream(&[6, seed]);
            let out = apply_corruption(&img, &spec, &mut rng).unwrap();
            assert!(out.pixels().iter().all(|&v| v == 0.0 || v == 1.0));
            let frac = out.pixels().iter().filter(|&&v| v == 1.0).count() as f64 / 784.0;
            assert!((frac - 0.5).abs() <= 0.08, "seed {seed}: {frac}");
            total += frac;
        }
        assert!((total / 200.0 - 0.5).abs() < 0.01);
    }

    #[test]
    fn corruption_parsing() {
        let spec: CorruptionSpec = "blur:0.8".parse().unwrap();
        assert_eq!(spec.kind, CorruptionKind::Blur);
        assert_eq!(spec.to_string(), "blur:0.8");
        assert!("fog:1".parse::<CorruptionSpec>().is_err());
        assert!("brightness:2".parse::<CorruptionSpec>().is_err());
        assert!("salt_pepper:-0.1".parse::<CorruptionSpec>().is_err());
        assert!("blur".parse::<CorruptionSpec>().is_err());
    }

    #[test]
    fn zero_alpha_without_corruption_reproduces_exemplar() {
        let img = glyph();
        let params = DeformParams {
            alpha: 0.0,
            ..Default::default()
        };
        for index in 0..20 {
            let out = synthesize_example(&img, &params, Split::Train, 3, index).unwrap();
            assert_eq!(out.to_bytes(), img.to_bytes());
        }
    }

    #[test]
    fn deterministic_per_coordinates() {
        let img = glyph();
        let params = DeformParams {
            master_seed: 99,
            corruptions: vec![CorruptionSpec::new(CorruptionKind::GaussianNoise, 0.05).unwrap()],
            ..Default::default()
        };
        let a = synthesize_example(&img, &params, Split::Test, 2, 17).unwrap();
        let b = synthesize_example(&img, &params, Split::Test, 2, 17).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = synthesize_example(&img, &params, Split::Train, 2, 17).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn distinct_indices_differ() {
        let img = glyph();
        let params = DeformParams::default();
        for pair in 0..100u64 {
            let a = synthesize_example(&img, &params, Split::Train, 0, 2 * pair)
                .unwrap()
                .to_bytes();
            let b = synthesize_example(&img, &params, Split::Train, 0, 2 * pair + 1)
                .unwrap()
                .to_bytes();
            let differing = a.iter().zip(&b).filter(|(x, y)| x != y).count();
            assert!(differing as f64 >= 0.01 * 784.0, "pair {pair}: {differing}");
        }
    }

    #[test]
    fn mass_roughly_preserved() {
        let img = glyph();
        let total = img.total_intensity();
        for alpha in [2.0, 4.0, 8.0] {
            for gamma in [2.0, 2.5, 4.0] {
                let params = DeformParams {
                    alpha,
                    gamma_lo: gamma,
                    gamma_hi: gamma,
                    ..Default::default()
                };
                for index in 0..50 {
                    let out = synthesize_example(&img, &params, Split::Train, 1, index).unwrap();
                    let ratio = out.total_intensity() / total;
                    assert!(
                        (ratio - 1.0).abs() <= 0.35,
                        "alpha {alpha} gamma {gamma}: {ratio}"
                    );
                }
            }
        }
    }

    #[test]
    fn distortion_grows_with_alpha() {
        let img = glyph();
        let mut prev = -1.0;
        for alpha in [0.0, 2.0, 4.0, 8.0] {
            let params = DeformParams {
                alpha,
                ..Default::default()
            };
            let mut mad = 0.0;
            for index in 0..100 {
                let out = synthesize_example(&img, &params, Split::Train, 4, index).unwrap();
                mad += out
                    .pixels()
                    .iter()
                    .zip(img.pixels())
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
                    / 784.0;
            }
            mad /= 100.0;
            assert!(mad >= prev, "alpha {alpha}: {mad} < {prev}");
            prev = mad;
        }
    }

    #[test]
    fn quantized_output_in_range() {
        let img = glyph();
        let params = DeformParams {
            corruptions: vec![
                CorruptionSpec::new(CorruptionKind::GaussianNoise, 0.3).unwrap(),
                CorruptionSpec::new(CorruptionKind::Brightness, -0.2).unwrap(),
            ],
            ..Default::default()
        };
        let out = synthesize_example(&img, &params, Split::Train, 0, 0).unwrap();
        assert!(out.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(quantize(out.pixels()[0]), out.to_bytes()[0]);
    }
}
