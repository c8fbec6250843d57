//! Exemplar glyph ingestion: one seed image per class, normalized to the
//! MNIST framing (20-pixel box, center of mass at the middle of a 28×28 canvas).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{bilinear_sample, binarize, GrayImage};
use crate::pgm::parse_pgm;

pub const SIDE: usize = 28;
pub const BOX: usize = 20;
pub const NUM_CLASSES: usize = 10;
const FOREGROUND: f64 = 0.5;
const CENTER: f64 = 13.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub label: u8,
    pub glyph_name: String,
    pub image: GrayImage,
}

/// Ten normalized exemplars, sorted by label `0..=9`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarSet {
    classes: Vec<Exemplar>,
}

impl ExemplarSet {
    pub fn new(mut classes: Vec<Exemplar>) -> Result<Self> {
        classes.sort_by_key(|e| e.label);
        let mut seen = [false; NUM_CLASSES];
        for e in &classes {
            let slot = seen
                .get_mut(e.label as usize)
                .ok_or_else(|| Error::Manifest(format!("label {} is outside 0..=9", e.label)))?;
            if *slot {
                return Err(Error::DuplicateLabel(e.label));
            }
            *slot = true;
            if e.image.height() != SIDE || e.image.width() != SIDE {
                return Err(Error::Shape(format!(
                    "exemplar {} is {}x{}, expected 28x28",
                    e.label,
                    e.image.height(),
                    e.image.width()
                )));
            }
            if !e.image.pixels().iter().any(|&v| v > FOREGROUND) {
                return Err(Error::NoForeground);
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::MissingLabel(missing as u8));
        }
        Ok(Self { classes })
    }

    pub fn classes(&self) -> &[Exemplar] {
        &self.classes
    }

    pub fn get(&self, label: u8) -> &Exemplar {
        &self.classes[label as usize]
    }
}

/// Side of the scratch canvas the glyph is rendered onto before placement.
const WORK: usize = 64;
/// Relative scale steps tried around the nominal `20 / longest side`.
const SCALE_STEP: f64 = 0.01;
const SCALE_TRIES: usize = 30;

/// Resamples `img` scaled by `s` about `(rc, cc)` onto a `WORK`-sized canvas.
/// With `phase = 0` only the integer parts of the center move, so `s = 1` is
/// an exact copy; a half-pixel phase lets an odd extent scale to an even one.
fn render(img: &GrayImage, rc: f64, cc: f64, s: f64, phase: (f64, f64)) -> GrayImage {
    let mid = (WORK / 2) as f64;
    let (fr, fc) = (rc - rc.floor() + phase.0, cc - cc.floor() + phase.1);
    let mut out = GrayImage::zeros(WORK, WORK).expect("nonzero canvas");
    for i in 0..WORK {
        let y = rc + (i as f64 - mid - fr) / s;
        for j in 0..WORK {
            let x = cc + (j as f64 - mid - fc) / s;
            out.set(i, j, bilinear_sample(img, x, y));
        }
    }
    out
}

fn longest_side(img: &GrayImage) -> Option<usize> {
    let (r0, r1, c0, c1) = binarize(img, FOREGROUND).ok()?.bounding_box()?;
    Some((r1 - r0 + 1).max(c1 - c0 + 1))
}

/// Rounds a fractional shift to whole pixels. Summation noise is snapped away
/// first and ties always go up, a rule that commutes with integer
/// translation, so a glyph already centered is never shifted.
fn centering_shift(t: f64) -> isize {
    ((t * 1e6).round() / 1e6 + 0.5).floor() as isize
}

/// Crops to the foreground box, rescales so the thresholded longer side is
/// 20 pixels and centers the intensity mass in a 28×28 canvas.
///
/// Resampling can shave thin stroke ends off the box, so scales near the
/// nominal one are tried in order of distance until the measured side is 20.
pub fn normalize_exemplar(img: &GrayImage) -> Result<GrayImage> {
    let mask = binarize(img, FOREGROUND)?;
    let (r0, r1, c0, c1) = mask.bounding_box().ok_or(Error::NoForeground)?;
    let tall = r1 - r0 >= c1 - c0;
    let longest = (r1 - r0 + 1).max(c1 - c0 + 1) as f64;
    let nominal = BOX as f64 / longest;
    let (rc, cc) = ((r0 + r1) as f64 / 2.0, (c0 + c1) as f64 / 2.0);

    let mut best: Option<(usize, GrayImage)> = None;
    for k in 0..=4 * SCALE_TRIES + 1 {
        let step = k / 4;
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let shift = if k % 2 == 0 { 0.0 } else { 0.5 };
        let phase = if tall { (shift, 0.0) } else { (0.0, shift) };
        let s = nominal * (1.0 + sign * SCALE_STEP * step as f64);
        let canvas = render(img, rc, cc, s, phase);
        let Some(side) = longest_side(&canvas) else {
            continue;
        };
        let miss = side.abs_diff(BOX);
        if best.as_ref().is_none_or(|(m, _)| miss < *m) {
            best = Some((miss, canvas));
        }
        if miss == 0 {
            break;
        }
    }
    let (_, canvas) = best.ok_or(Error::NoForeground)?;

    let (mut mass, mut mr, mut mc) = (0.0, 0.0, 0.0);
    for i in 0..WORK {
        for j in 0..WORK {
            let v = canvas.get(i, j);
            mass += v;
            mr += v * i as f64;
            mc += v * j as f64;
        }
    }
    let off_r = centering_shift(CENTER - mr / mass);
    let off_c = centering_shift(CENTER - mc / mass);

    let mut out = GrayImage::zeros(SIDE, SIDE)?;
    for r in 0..SIDE {
        for c in 0..SIDE {
            let (i, j) = (r as isize - off_r, c as isize - off_c);
            if (0..WORK as isize).contains(&i) && (0..WORK as isize).contains(&j) {
                out.set(r, c, canvas.get(i as usize, j as usize));
            }
        }
    }
    Ok(out)
}

#[derive(Debug)]
struct ManifestRow {
    label: u8,
    glyph_name: String,
    file: PathBuf,
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Manifest(e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols != ["label", "glyph_name", "file"] {
        return Err(Error::Manifest(format!(
            "header must be `label,glyph_name,file`, found `{}`",
            cols.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Manifest(e.to_string()))?;
        if record.len() != 3 {
            return Err(Error::Manifest(format!(
                "row {} has {} columns, expected 3",
                line + 2,
                record.len()
            )));
        }
        let label: u8 = record[0]
            .parse()
            .ok()
            .filter(|&l: &u8| (l as usize) < NUM_CLASSES)
            .ok_or_else(|| {
                Error::Manifest(format!("row {}: bad label `{}`", line + 2, &record[0]))
            })?;
        rows.push(ManifestRow {
            label,
            glyph_name: record[1].to_string(),
            file: PathBuf::from(&record[2]),
        });
    }
    Ok(rows)
}

/// Reads the `label,glyph_name,file` manifest and loads every exemplar from
/// `directory`, normalizing each one.
pub fn load_exemplar_set(directory: &Path, manifest: &Path) -> Result<ExemplarSet> {
    let rows = read_manifest(manifest)?;
    let mut by_label: BTreeMap<u8, &ManifestRow> = BTreeMap::new();
    for row in &rows {
        if by_label.insert(row.label, row).is_some() {
            return Err(Error::DuplicateLabel(row.label));
        }
    }
    if let Some(missing) = (0..NUM_CLASSES as u8).find(|l| !by_label.contains_key(l)) {
        return Err(Error::MissingLabel(missing));
    }
    let classes = rows
        .par_iter()
        .map(|row| {
            let path = directory.join(&row.file);
            let load = || -> Result<GrayImage> {
                let bytes = std::fs::read(&path)?;
                normalize_exemplar(&parse_pgm(&bytes)?)
            };
            let image = load().map_err(|source| Error::Exemplar {
                label: row.label,
                path: path.clone(),
                source: Box::new(source),
            })?;
            Ok(Exemplar {
                label: row.label,
                glyph_name: row.glyph_name.clone(),
                image,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ExemplarSet::new(classes)
}
