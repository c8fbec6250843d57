//! Locating IDX pairs inside a data directory.

use std::path::{Path, PathBuf};

use afromnist_core::idx::{read_idx, IdxDataset};
use anyhow::{bail, Context, Result};

const IMAGES_SUFFIX: &str = "-images-idx3-ubyte";
const LABELS_SUFFIX: &str = "-labels-idx1-ubyte";

/// File stem prefixes accepted for a split: `<name>-<split>` as written by
/// `generate`, plus the canonical MNIST stems.
fn stem_matches(stem: &str, split: &str) -> bool {
    let canonical = match split {
        "train" => "train",
        "test" => "t10k",
        _ => return false,
    };
    stem == canonical || stem.ends_with(&format!("-{split}"))
}

/// Finds the unique images/labels pair for `split` in `dir`.
pub fn find_split(dir: &Path, split: &str) -> Result<Option<(PathBuf, PathBuf)>> {
    let entries = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read data directory {}", dir.display()))?;
    let mut found = Vec::new();
    for entry in entries {
        let entry =
            entry.with_context(|| format!("cannot read data directory {}", dir.display()))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(stem) = name.strip_suffix(IMAGES_SUFFIX) else {
            continue;
        };
        if stem_matches(stem, split) {
            found.push((entry.path(), dir.join(format!("{stem}{LABELS_SUFFIX}"))));
        }
    }
    found.sort();
    match found.len() {
        0 => Ok(None),
        1 => {
            let pair = found.remove(0);
            if !pair.1.is_file() {
                bail!("labels file {} is missing", pair.1.display());
            }
            Ok(Some(pair))
        }
        _ => bail!(
            "{} holds several {split} sets: {}",
            dir.display(),
            found
                .iter()
                .map(|(p, _)| p.display().to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

pub fn load_pair(images: &Path, labels: &Path) -> Result<IdxDataset> {
    let img = std::fs::read(images).with_context(|| format!("cannot read {}", images.display()))?;
    let lab = std::fs::read(labels).with_context(|| format!("cannot read {}", labels.display()))?;
    read_idx(&img, &lab).with_context(|| format!("{} / {}", images.display(), labels.display()))
}

pub struct Loaded {
    pub dataset: IdxDataset,
    pub images: PathBuf,
    pub labels: PathBuf,
}

pub fn load_split(dir: &Path, split: &str) -> Result<Option<Loaded>> {
    Ok(match find_split(dir, split)? {
        None => None,
        Some((images, labels)) => Some(Loaded {
            dataset: load_pair(&images, &labels)?,
            images,
            labels,
        }),
    })
}

pub fn require_split(dir: &Path, split: &str) -> Result<Loaded> {
    load_split(dir, split)?
        .with_context(|| format!("no {split} IDX files found in {}", dir.display()))
}
