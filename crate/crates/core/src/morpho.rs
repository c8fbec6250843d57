//! Morphometric profiling of glyph images: skeleton, distance map, and the
//! six scalar shape measures, plus class-mean images and their exports.

use std::io::Write;

use crate::error::{Error, Result};
use crate::exemplar::NUM_CLASSES;
use crate::idx::IdxDataset;
use crate::image::{binarize, GrayImage, Mask};
use crate::pgm::write_pgm;

const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorphometricRecord {
    pub thickness: f64,
    pub slant: f64,
    pub width: f64,
    pub height: f64,
    pub length: f64,
    pub area: f64,
}

// Neighbours P2..P9, clockwise from north.
const RING: [(isize, isize); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

fn ring(mask: &Mask, r: usize, c: usize) -> [bool; 8] {
    let mut p = [false; 8];
    for (slot, (dr, dc)) in p.iter_mut().zip(RING) {
        *slot = mask.get_signed(r as isize + dr, c as isize + dc);
    }
    p
}

/// One Zhang–Suen sub-iteration; returns whether anything was removed.
fn thinning_pass(mask: &mut Mask, first: bool) -> bool {
    let mut doomed = Vec::new();
    for (r, c) in mask.iter_set() {
        let p = ring(mask, r, c);
        let b = p.iter().filter(|&&v| v).count();
        if !(2..=6).contains(&b) {
            continue;
        }
        let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
        if a != 1 {
            continue;
        }
        // p[0]=P2 (N), p[2]=P4 (E), p[4]=P6 (S), p[6]=P8 (W)
        let (n, e, s, w) = (p[0], p[2], p[4], p[6]);
        let keep = if first {
            (n && e && s) || (e && s && w)
        } else {
            (n && e && w) || (n && s && w)
        };
        if !keep {
            doomed.push((r, c));
        }
    }
    for &(r, c) in &doomed {
        mask.set(r, c, false);
    }
    !doomed.is_empty()
}

/// Zhang–Suen thinning iterated to a fixpoint.
pub fn skeletonize(mask: &Mask) -> Mask {
    let mut out = mask.clone();
    loop {
        let a = thinning_pass(&mut out, true);
        let b = thinning_pass(&mut out, false);
        if !a && !b {
            return out;
        }
    }
}

/// 1-D squared distance transform (lower envelope of parabolas rooted at
/// the finite samples).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let mut k: Option<usize> = None;
    for q in 0..f.len() {
        if f[q].is_infinite() {
            continue;
        }
        let Some(mut top) = k else {
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            k = Some(0);
            continue;
        };
        let fq = f[q] + (q * q) as f64;
        let mut s;
        loop {
            let p = v[top];
            s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[top] && top > 0 {
                top -= 1;
            } else {
                break;
            }
        }
        if s <= z[top] {
            // Only possible at the first parabola: q dominates everywhere.
            v[top] = q;
        } else {
            top += 1;
            v[top] = q;
            z[top] = s;
        }
        z[top + 1] = f64::INFINITY;
        k = Some(top);
    }
    let Some(_) = k else {
        out.fill(f64::INFINITY);
        return;
    };
    let mut j = 0;
    for (q, slot) in out.iter_mut().enumerate() {
        while z[j + 1] < q as f64 {
            j += 1;
        }
        let d = q as f64 - v[j] as f64;
        *slot = f[v[j]] + d * d;
    }
}

/// Exact Euclidean distance from every foreground pixel to the nearest
/// background pixel, where the ring just outside the frame counts as
/// background. Background pixels map to 0.
pub fn distance_transform(mask: &Mask) -> Vec<f64> {
    let (h, w) = (mask.height + 2, mask.width + 2);
    let mut grid = vec![0.0; h * w];
    for (r, c) in mask.iter_set() {
        grid[(r + 1) * w + (c + 1)] = f64::INFINITY;
    }
    let n = h.max(w);
    let (mut f, mut out) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    for c in 0..w {
        for r in 0..h {
            f[r] = grid[r * w + c];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for r in 0..h {
            grid[r * w + c] = out[r];
        }
    }
    for r in 0..h {
        f[..w].copy_from_slice(&grid[r * w..(r + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[r * w..(r + 1) * w].copy_from_slice(&out[..w]);
    }
    let mut dist = vec![0.0; mask.height * mask.width];
    for r in 0..mask.height {
        for c in 0..mask.width {
            dist[r * mask.width + c] = grid[(r + 1) * w + (c + 1)].sqrt();
        }
    }
    dist
}

/// Total skeleton length: each unordered pair of adjacent skeleton pixels
/// contributes 1 (edge neighbours) or √2 (diagonal neighbours).
pub fn skeleton_length(skel: &Mask) -> f64 {
    let mut length = 0.0;
    for (r, c) in skel.iter_set() {
        let (r, c) = (r as isize, c as isize);
        if skel.get_signed(r, c + 1) {
            length += 1.0;
        }
        if skel.get_signed(r + 1, c) {
            length += 1.0;
        }
        if skel.get_signed(r + 1, c + 1) {
            length += std::f64::consts::SQRT_2;
        }
        if skel.get_signed(r + 1, c - 1) {
            length += std::f64::consts::SQRT_2;
        }
    }
    length
}

/// Shear coefficient μ11/μ02 of the intensity-weighted central moments, with
/// x pointing right and y pointing up. Positive for glyphs leaning right.
pub fn slant(img: &GrayImage) -> f64 {
    let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for r in 0..img.height() {
        for c in 0..img.width() {
            let v = img.get(r, c);
            m += v;
            sx += v * c as f64;
            sy += v * -(r as f64);
        }
    }
    let (xbar, ybar) = (sx / m, sy / m);
    let (mut mu11, mut mu02) = (0.0, 0.0);
    for r in 0..img.height() {
        for c in 0..img.width() {
            let v = img.get(r, c);
            let dx = c as f64 - xbar;
            let dy = -(r as f64) - ybar;
            mu11 += v * dx * dy;
            mu02 += v * dy * dy;
        }
    }
    if mu02 == 0.0 {
        0.0
    } else {
        mu11 / mu02
    }
}

pub fn measure(img: &GrayImage) -> Result<MorphometricRecord> {
    let mask = binarize(img, THRESHOLD)?;
    let (r0, r1, c0, c1) = mask.bounding_box().ok_or(Error::NoForeground)?;
    let skel = skeletonize(&mask);
    let dist = distance_transform(&mask);
    let on_skeleton: Vec<f64> = skel
        .iter_set()
        .map(|(r, c)| dist[r * mask.width + c])
        .collect();
    // Zhang–Suen can erase two-pixel diagonal strokes entirely; fall back to
    // the whole mask so thickness stays defined.
    let samples: Vec<f64> = if on_skeleton.is_empty() {
        mask.iter_set()
            .map(|(r, c)| dist[r * mask.width + c])
            .collect()
    } else {
        on_skeleton
    };
    let thickness = 2.0 * samples.iter().sum::<f64>() / samples.len() as f64;
    Ok(MorphometricRecord {
        thickness,
        slant: slant(img),
        width: (c1 - c0 + 1) as f64,
        height: (r1 - r0 + 1) as f64,
        length: skeleton_length(&skel),
        area: mask.count() as f64 / (mask.height * mask.width) as f64,
    })
}

/// Pixelwise mean image of each label.
pub fn class_mean_images(ds: &IdxDataset) -> Result<Vec<GrayImage>> {
    let per = ds.rows() * ds.cols();
    let mut sums = vec![vec![0u64; per]; NUM_CLASSES];
    let counts = ds.class_counts();
    if let Some(missing) = counts.iter().position(|&n| n == 0) {
        return Err(Error::MissingLabel(missing as u8));
    }
    for (i, &label) in ds.labels().iter().enumerate() {
        for (acc, &b) in sums[label as usize].iter_mut().zip(ds.image_bytes(i)) {
            *acc += u64::from(b);
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(sum, n)| {
            let px = sum
                .into_iter()
                .map(|s| s as f64 / (255.0 * n as f64))
                .collect();
            GrayImage::from_pixels(ds.rows(), ds.cols(), px)
        })
        .collect()
}

/// Pearson correlation of two equally sized images.
pub fn pearson(a: &GrayImage, b: &GrayImage) -> f64 {
    let n = a.pixels().len() as f64;
    let ma = a.total_intensity() / n;
    let mb = b.total_intensity() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.pixels().iter().zip(b.pixels()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va * vb).sqrt()
}

/// One CSV row per measured image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredImage {
    pub index: usize,
    pub label: u8,
    pub record: MorphometricRecord,
}

pub const CSV_HEADER: &str = "index,label,thickness,slant,width,height,length,area";

pub fn export_csv<W: Write>(rows: &[MeasuredImage], sink: &mut W) -> std::io::Result<()> {
    writeln!(sink, "{CSV_HEADER}")?;
    for row in rows {
        let m = &row.record;
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{}",
            row.index, row.label, m.thickness, m.slant, m.width, m.height, m.length, m.area
        )?;
    }
    Ok(())
}

/// Tiles equally sized images left to right into one image.
pub fn montage(images: &[GrayImage]) -> Result<GrayImage> {
    let first = images
        .first()
        .ok_or_else(|| Error::invalid("montage needs at least one image"))?;
    let (h, w) = (first.height(), first.width());
    let mut out = GrayImage::zeros(h, w * images.len())?;
    for (k, img) in images.iter().enumerate() {
        if img.height() != h || img.width() != w {
            return Err(Error::Shape("montage tiles differ in size".into()));
        }
        for r in 0..h {
            for c in 0..w {
                out.set(r, k * w + c, img.get(r, c));
            }
        }
    }
    Ok(out)
}

pub fn write_montage<W: Write>(images: &[GrayImage], sink: &mut W) -> Result<usize> {
    Ok(write_pgm(&montage(images)?, sink)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_from(rows: &[&str]) -> Mask {
        let mut m = Mask::new(rows.len(), rows[0].len());
        for (r, line) in rows.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                m.set(r, c, ch == '#');
            }
        }
        m
    }

    fn filled(h: usize, w: usize, r0: usize, c0: usize, rh: usize, rw: usize) -> GrayImage {
        let mut img = GrayImage::zeros(h, w).unwrap();
        for r in r0..r0 + rh {
            for c in c0..c0 + rw {
                img.set(r, c, 1.0);
            }
        }
        img
    }

    /// Oracle: nearest background cell by exhaustive search over the grid
    /// padded with a one-pixel background ring.
    fn brute_force_edt(mask: &Mask) -> Vec<f64> {
        let (h, w) = (mask.height as isize, mask.width as isize);
        let mut out = vec![0.0; mask.bits.len()];
        for r in 0..h {
            for c in 0..w {
                if !mask.get(r as usize, c as usize) {
                    continue;
                }
                let mut best = i64::MAX;
                for br in -1..=h {
                    for bc in -1..=w {
                        if !mask.get_signed(br, bc) {
                            let d = ((br - r) * (br - r) + (bc - c) * (bc - c)) as i64;
                            best = best.min(d);
                        }
                    }
                }
                out[(r * w + c) as usize] = (best as f64).sqrt();
            }
        }
        out
    }

    #[test]
    fn skeleton_trivial_cases() {
        let empty = Mask::new(5, 5);
        assert_eq!(skeletonize(&empty), empty);
        let dot = mask_from(&["...", ".#.", "..."]);
        assert_eq!(skeletonize(&dot), dot);
    }

    #[test]
    fn bar_thins_to_middle_row() {
        let mut bar = Mask::new(7, 19);
        for r in 2..5 {
            for c in 2..17 {
                bar.set(r, c, true);
            }
        }
        let skel = skeletonize(&bar);
        let cols: Vec<usize> = skel
            .iter_set()
            .map(|(r, c)| {
                assert_eq!(r, 3, "skeleton left the middle row");
                c
            })
            .collect();
        assert!(cols.len() >= 11, "{cols:?}");
        assert!(cols.windows(2).all(|w| w[1] == w[0] + 1));
        assert!(skel.iter_set().all(|(r, c)| bar.get(r, c)));
    }

    #[test]
    fn edt_examples() {
        let full = mask_from(&["#####"; 5]);
        let d = distance_transform(&full);
        assert_eq!(d[2 * 5 + 2], 3.0);
        assert_eq!(d[0], 1.0);
        let dot = mask_from(&["...", ".#.", "..."]);
        assert_eq!(distance_transform(&dot)[4], 1.0);
        assert!(distance_transform(&Mask::new(4, 6))
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn edt_matches_brute_force_on_random_masks() {
        let mut state = 0x1234_5678_9abc_def0u64;
        for trial in 0..200 {
            let density = 0.2 + 0.7 * (trial as f64 / 200.0);
            let mut m = Mask::new(28, 28);
            for i in 0..784 {
                state = crate::rng::splitmix64(state);
                m.bits[i] = ((state >> 11) as f64 / (1u64 << 53) as f64) < density;
            }
            assert_eq!(distance_transform(&m), brute_force_edt(&m), "trial {trial}");
        }
    }

    #[test]
    fn vertical_bar_measures() {
        let img = filled(28, 28, 4, 12, 20, 3);
        let m = measure(&img).unwrap();
        assert!(m.slant.abs() < 1e-6);
        assert_eq!((m.height, m.width), (20.0, 3.0));
        assert!((m.area - 60.0 / 784.0).abs() < 1e-12);
    }

    #[test]
    fn thick_bar_thickness() {
        // The medial row sits 3 pixels from background on either side.
        let img = filled(28, 28, 10, 4, 5, 20);
        let m = measure(&img).unwrap();
        assert!((m.thickness - 5.0).abs() <= 1.0, "{}", m.thickness);
    }

    #[test]
    fn thin_line_length_and_thickness() {
        let img = filled(28, 28, 13, 5, 1, 15);
        let m = measure(&img).unwrap();
        assert!((m.length - 14.0).abs() < 1e-12);
        assert!((m.thickness - 2.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_length_uses_sqrt2() {
        let mut m = Mask::new(6, 6);
        for i in 0..5 {
            m.set(i, i, true);
        }
        assert!((skeleton_length(&m) - 4.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn blank_image_rejected() {
        assert!(matches!(
            measure(&GrayImage::zeros(28, 28).unwrap()),
            Err(Error::NoForeground)
        ));
    }

    #[test]
    fn class_means() {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for l in 0..10u8 {
            images.extend(vec![0u8; 784]);
            images.extend(vec![255u8; 784]);
            labels.extend([l, l]);
        }
        let ds = IdxDataset::new(28, 28, images, labels).unwrap();
        let means = class_mean_images(&ds).unwrap();
        assert_eq!(means.len(), 10);
        assert!(means.iter().all(|m| m.pixels().iter().all(|&v| v == 0.5)));

        let ds = IdxDataset::new(28, 28, vec![9; 784 * 9], (0..9).collect()).unwrap();
        assert!(matches!(
            class_mean_images(&ds),
            Err(Error::MissingLabel(9))
        ));
    }

    #[test]
    fn export_formats() {
        let mut out = Vec::new();
        export_csv(&[], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{CSV_HEADER}\n"));

        let tiles = vec![GrayImage::zeros(28, 28).unwrap(); 10];
        let mut out = Vec::new();
        write_montage(&tiles, &mut out).unwrap();
        assert!(out.starts_with(b"P5\n280 28\n255\n"));
        assert_eq!(out.len(), 14 + 280 * 28);
    }

    #[test]
    fn csv_values_round_trip() {
        let rec = measure(&filled(28, 28, 3, 7, 18, 6)).unwrap();
        let mut out = Vec::new();
        export_csv(
            &[MeasuredImage {
                index: 4,
                label: 2,
                record: rec,
            }],
            &mut out,
        )
        .unwrap();
        let text = String::from_utf8(out).unwrap();
        let fields: Vec<f64> = text
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .map(|s| s.parse().unwrap())
            .collect();
        let want = [
            4.0,
            2.0,
            rec.thickness,
            rec.slant,
            rec.width,
            rec.height,
            rec.length,
            rec.area,
        ];
        for (got, want) in fields.iter().zip(want) {
            assert!((got - want).abs() <= 1e-6 * want.abs().max(1e-12));
        }
    }

    /// Rasterizes a bar of the given width and height whose columns shift by
    /// `shear * y`, with y measured upward from the bar's base.
    fn sheared_bar(shear: f64) -> GrayImage {
        let mut img = GrayImage::zeros(28, 28).unwrap();
        for r in 4..24 {
            let y = (23 - r) as f64;
            let left = 12.0 + shear * (y - 10.0);
            for c in 0..28 {
                let cf = c as f64;
                let cover = ((cf + 0.5).min(left + 3.0) - (cf - 0.5).max(left)).clamp(0.0, 1.0);
                img.set(r, c, cover);
            }
        }
        img
    }

    #[test]
    fn slant_sign_follows_shear() {
        assert!(slant(&sheared_bar(0.3)) > 0.0);
        assert!(slant(&sheared_bar(-0.3)) < 0.0);
        assert!(slant(&sheared_bar(0.0)).abs() < 1e-9);
    }

    fn dilate(mask: &Mask) -> Mask {
        let mut out = mask.clone();
        for (r, c) in mask.iter_set() {
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if rr >= 0
                        && cc >= 0
                        && (rr as usize) < mask.height
                        && (cc as usize) < mask.width
                    {
                        out.set(rr as usize, cc as usize, true);
                    }
                }
            }
        }
        out
    }

    fn mask_image(m: &Mask) -> GrayImage {
        GrayImage::from_pixels(
            m.height,
            m.width,
            m.bits.iter().map(|&b| f64::from(u8::from(b))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn dilation_thickens() {
        for (r0, c0, h, w) in [(4, 12, 20, 3), (10, 4, 4, 20), (5, 5, 18, 2)] {
            let mask = binarize(&filled(28, 28, r0, c0, h, w), 0.5).unwrap();
            let before = measure(&mask_image(&mask)).unwrap().thickness;
            let after = measure(&mask_image(&dilate(&mask))).unwrap().thickness;
            assert!(after > before, "{before} -> {after}");
        }
    }

    fn components(m: &Mask) -> Vec<Vec<(usize, usize)>> {
        let mut seen = vec![false; m.bits.len()];
        let mut out = Vec::new();
        for (r, c) in m.iter_set() {
            if seen[r * m.width + c] {
                continue;
            }
            let mut stack = vec![(r, c)];
            seen[r * m.width + c] = true;
            let mut comp = Vec::new();
            while let Some((r, c)) = stack.pop() {
                comp.push((r, c));
                for (dr, dc) in RING {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if m.get_signed(rr, cc) && !seen[rr as usize * m.width + cc as usize] {
                        seen[rr as usize * m.width + cc as usize] = true;
                        stack.push((rr as usize, cc as usize));
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    /// Unions of thick bars, the kind of strokes glyphs are made of.
    fn stroke_mask() -> impl Strategy<Value = Mask> {
        proptest::collection::vec((0usize..24, 0usize..24, 3usize..20, 3usize..20), 1..5).prop_map(
            |bars| {
                let mut m = Mask::new(28, 28);
                for (r0, c0, h, w) in bars {
                    for r in r0..(r0 + h).min(28) {
                        for c in c0..(c0 + w).min(28) {
                            m.set(r, c, true);
                        }
                    }
                }
                m
            },
        )
    }

    proptest! {
        #[test]
        fn skeleton_is_a_fixpoint_subset(m in stroke_mask()) {
            let skel = skeletonize(&m);
            prop_assert!(skel.iter_set().all(|(r, c)| m.get(r, c)));
            let mut again = skel.clone();
            prop_assert!(!thinning_pass(&mut again, true));
            prop_assert!(!thinning_pass(&mut again, false));
        }

        #[test]
        fn skeleton_keeps_components(m in stroke_mask()) {
            let before = components(&m);
            let skel = skeletonize(&m);
            let after = components(&skel);
            prop_assert_eq!(before.len(), after.len());
            for comp in &before {
                prop_assert!(comp.iter().any(|&(r, c)| skel.get(r, c)));
            }
        }
    }
}
