//! Properties checked on the bundled exemplar glyphs.

mod common;

use afromnist_core::exemplar::{load_exemplar_set, normalize_exemplar};
use afromnist_core::image::{binarize, GrayImage, Mask};
use afromnist_core::morpho::measure;

use common::{exemplar_dir, exemplar_manifest};

fn mask_image(mask: &Mask) -> GrayImage {
    let mut img = GrayImage::zeros(mask.height, mask.width).unwrap();
    for (r, c) in mask.iter_set() {
        img.set(r, c, 1.0);
    }
    img
}

fn dilate(mask: &Mask) -> Mask {
    let mut out = mask.clone();
    for (r, c) in mask.iter_set() {
        for dr in -1..=1isize {
            for dc in -1..=1isize {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                if (0..mask.height as isize).contains(&rr) && (0..mask.width as isize).contains(&cc)
                {
                    out.set(rr as usize, cc as usize, true);
                }
            }
        }
    }
    out
}

#[test]
fn dilation_thickens_every_exemplar() {
    let set = load_exemplar_set(&exemplar_dir(), &exemplar_manifest()).unwrap();
    for e in set.classes() {
        let mask = binarize(&e.image, 0.5).unwrap();
        let before = measure(&mask_image(&mask)).unwrap().thickness;
        let after = measure(&mask_image(&dilate(&mask))).unwrap().thickness;
        assert!(after > before, "{}: {before} -> {after}", e.glyph_name);
    }
}

#[test]
fn normalizing_an_exemplar_again_changes_little() {
    let set = load_exemplar_set(&exemplar_dir(), &exemplar_manifest()).unwrap();
    for e in set.classes() {
        let again = normalize_exemplar(&e.image).unwrap();
        let worst = e
            .image
            .pixels()
            .iter()
            .zip(again.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.02, "{}: max difference {worst}", e.glyph_name);
    }
}

#[test]
fn exemplars_fill_the_twenty_pixel_box() {
    let set = load_exemplar_set(&exemplar_dir(), &exemplar_manifest()).unwrap();
    for e in set.classes() {
        let (r0, r1, c0, c1) = binarize(&e.image, 0.5).unwrap().bounding_box().unwrap();
        let longest = (r1 - r0 + 1).max(c1 - c0 + 1);
        assert!(longest.abs_diff(20) <= 1, "{}: {longest}", e.glyph_name);
    }
}
