//! Balanced, seeded generation of full train/test splits from an exemplar set.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exemplar::{ExemplarSet, NUM_CLASSES, SIDE};
use crate::idx::{split_paths, write_idx_images, write_idx_labels, IdxDataset};
use crate::rng;
use crate::synthesis::{synthesize_example, DeformParams, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub train_total: usize,
    pub test_total: usize,
    pub deform: DeformParams,
    pub shuffle: bool,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            train_total: 60_000,
            test_total: 10_000,
            deform: DeformParams::default(),
            shuffle: true,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("train_total", self.train_total),
            ("test_total", self.test_total),
        ] {
            if n % NUM_CLASSES != 0 {
                return Err(Error::invalid(format!(
                    "{name} = {n} is not divisible by {NUM_CLASSES}"
                )));
            }
        }
        self.deform.validate()
    }
}

/// Generates one split: `total / 10` samples per class, class-major, then an
/// optional seeded shuffle applied jointly to images and labels.
pub fn build_split(
    exemplars: &ExemplarSet,
    spec: &DatasetSpec,
    split: Split,
) -> Result<IdxDataset> {
    spec.validate()?;
    let total = match split {
        Split::Train => spec.train_total,
        Split::Test => spec.test_total,
    };
    let per_class = total / NUM_CLASSES;
    let images: Vec<Vec<u8>> = (0..total)
        .into_par_iter()
        .map(|slot| {
            let label = (slot / per_class) as u8;
            let index = (slot % per_class) as u64;
            let exemplar = &exemplars.get(label).image;
            synthesize_example(exemplar, &spec.deform, split, label, index)
                .map(|img| img.to_bytes())
        })
        .collect::<Result<_>>()?;
    let labels: Vec<u8> = (0..total).map(|slot| (slot / per_class) as u8).collect();
    let ds = IdxDataset::new(SIDE, SIDE, images.concat(), labels)?;
    if !spec.shuffle {
        return Ok(ds);
    }
    let mut order: Vec<usize> = (0..total).collect();
    let mut stream = rng::stream(&[rng::DOMAIN_SHUFFLE, spec.deform.master_seed, split.tag()]);
    order.shuffle(&mut stream);
    Ok(ds.select(&order))
}

pub fn build_dataset(
    exemplars: &ExemplarSet,
    spec: &DatasetSpec,
) -> Result<(IdxDataset, IdxDataset)> {
    spec.validate()?;
    Ok((
        build_split(exemplars, spec, Split::Train)?,
        build_split(exemplars, spec, Split::Test)?,
    ))
}

/// Writes the four IDX files for `name` into `dir` and returns their paths
/// in the order train images, train labels, test images, test labels.
pub fn write_dataset(
    dir: &Path,
    name: &str,
    train: &IdxDataset,
    test: &IdxDataset,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut paths = Vec::with_capacity(4);
    for (split, ds) in [("train", train), ("test", test)] {
        let (img_path, lab_path) = split_paths(dir, name, split);
        let mut w = BufWriter::new(File::create(&img_path).map_err(|e| Error::file(&img_path, e))?);
        write_idx_images(ds, &mut w)?;
        w.into_inner()
            .map_err(|e| Error::file(&img_path, e.into_error()))?;
        let mut w = BufWriter::new(File::create(&lab_path).map_err(|e| Error::file(&lab_path, e))?);
        write_idx_labels(ds, &mut w)?;
        w.into_inner()
            .map_err(|e| Error::file(&lab_path, e.into_error()))?;
        paths.push(img_path);
        paths.push(lab_path);
    }
    Ok(paths)
}
