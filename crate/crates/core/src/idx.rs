//! MNIST IDX files: rank-3 `u8` image tensors (magic `0x00000803`) and
//! rank-1 `u8` label vectors (magic `0x00000801`), all header fields
//! big-endian `u32`, no padding.

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::exemplar::{NUM_CLASSES, SIDE};
use crate::image::GrayImage;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("{file} file: wrong magic 0x{found:08x} at byte 0, expected 0x{expected:08x}")]
    WrongMagic {
        file: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("{file} file truncated at byte {offset}: needed {needed} bytes, file has {len}")]
    Truncated {
        file: &'static str,
        offset: usize,
        needed: usize,
        len: usize,
    },
    #[error("{file} file has {extra} trailing bytes after byte {offset}")]
    TrailingBytes {
        file: &'static str,
        offset: usize,
        extra: usize,
    },
    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {value} at byte {offset} is not in 0..=9")]
    LabelOutOfRange { value: u8, offset: usize },
    #[error("dataset has {images} images but {labels} labels")]
    Inconsistent { images: usize, labels: usize },
    #[error("write failed after {written} bytes: {source}")]
    Write {
        written: usize,
        #[source]
        source: std::io::Error,
    },
}

/// Images plus labels, mirroring one MNIST split on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxDataset {
    rows: usize,
    cols: usize,
    images: Vec<u8>,
    labels: Vec<u8>,
}

impl IdxDataset {
    pub fn new(
        rows: usize,
        cols: usize,
        images: Vec<u8>,
        labels: Vec<u8>,
    ) -> Result<Self, IdxError> {
        let per = rows * cols;
        if per == 0 || images.len() != per * labels.len() {
            return Err(IdxError::Inconsistent {
                images: images.len().checked_div(per).unwrap_or(0),
                labels: labels.len(),
            });
        }
        if let Some((i, &v)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= NUM_CLASSES)
        {
            return Err(IdxError::LabelOutOfRange {
                value: v,
                offset: 8 + i,
            });
        }
        Ok(Self {
            rows,
            cols,
            images,
            labels,
        })
    }

    pub fn empty() -> Self {
        Self {
            rows: SIDE,
            cols: SIDE,
            images: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn raw_images(&self) -> &[u8] {
        &self.images
    }

    pub fn image_bytes(&self, i: usize) -> &[u8] {
        let per = self.rows * self.cols;
        &self.images[i * per..(i + 1) * per]
    }

    pub fn image(&self, i: usize) -> GrayImage {
        GrayImage::from_bytes(self.rows, self.cols, self.image_bytes(i)).expect("validated dims")
    }

    /// Per-class instance counts.
    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Dataset made of the listed items, in that order.
    pub fn select(&self, order: &[usize]) -> Self {
        let per = self.rows * self.cols;
        let mut images = Vec::with_capacity(order.len() * per);
        let mut labels = Vec::with_capacity(order.len());
        for &i in order {
            images.extend_from_slice(self.image_bytes(i));
            labels.push(self.labels[i]);
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            images,
            labels,
        }
    }
}

struct CountingSink<'a, W: Write> {
    inner: &'a mut W,
    written: usize,
}

impl<W: Write> CountingSink<'_, W> {
    fn put(&mut self, bytes: &[u8]) -> Result<(), IdxError> {
        // Chunked so a failure reports how far the stream got.
        for chunk in bytes.chunks(64 * 1024) {
            self.inner
                .write_all(chunk)
                .map_err(|source| IdxError::Write {
                    written: self.written,
                    source,
                })?;
            self.written += chunk.len();
        }
        Ok(())
    }
}

pub fn write_idx_images<W: Write>(ds: &IdxDataset, sink: &mut W) -> Result<usize, IdxError> {
    let mut out = CountingSink {
        inner: sink,
        written: 0,
    };
    out.put(&IMAGES_MAGIC.to_be_bytes())?;
    out.put(&(ds.len() as u32).to_be_bytes())?;
    out.put(&(ds.rows as u32).to_be_bytes())?;
    out.put(&(ds.cols as u32).to_be_bytes())?;
    out.put(&ds.images)?;
    Ok(out.written)
}

pub fn write_idx_labels<W: Write>(ds: &IdxDataset, sink: &mut W) -> Result<usize, IdxError> {
    let mut out = CountingSink {
        inner: sink,
        written: 0,
    };
    out.put(&LABELS_MAGIC.to_be_bytes())?;
    out.put(&(ds.len() as u32).to_be_bytes())?;
    out.put(&ds.labels)?;
    Ok(out.written)
}

fn be_u32(bytes: &[u8], offset: usize, file: &'static str) -> Result<u32, IdxError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated {
            file,
            offset: bytes.len(),
            needed: offset + 4,
            len: bytes.len(),
        })
}

fn check_payload(
    bytes: &[u8],
    header: usize,
    payload: usize,
    file: &'static str,
) -> Result<(), IdxError> {
    let needed = header + payload;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            file,
            offset: bytes.len(),
            needed,
            len: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(IdxError::TrailingBytes {
            file,
            offset: needed,
            extra: bytes.len() - needed,
        });
    }
    Ok(())
}

/// Parses an image file and a label file into one dataset.
pub fn read_idx(images_bytes: &[u8], labels_bytes: &[u8]) -> Result<IdxDataset, IdxError> {
    let magic = be_u32(images_bytes, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(IdxError::WrongMagic {
            file: "images",
            found: magic,
            expected: IMAGES_MAGIC,
        });
    }
    let n = be_u32(images_bytes, 4, "images")? as usize;
    let rows = be_u32(images_bytes, 8, "images")? as usize;
    let cols = be_u32(images_bytes, 12, "images")? as usize;
    check_payload(images_bytes, 16, n * rows * cols, "images")?;

    let magic = be_u32(labels_bytes, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(IdxError::WrongMagic {
            file: "labels",
            found: magic,
            expected: LABELS_MAGIC,
        });
    }
    let m = be_u32(labels_bytes, 4, "labels")? as usize;
    if m != n {
        return Err(IdxError::CountMismatch {
            images: n,
            labels: m,
        });
    }
    check_payload(labels_bytes, 8, m, "labels")?;

    IdxDataset::new(
        rows,
        cols,
        images_bytes[16..].to_vec(),
        labels_bytes[8..].to_vec(),
    )
}

/// File names for one split following `<name>-<split>-images-idx3-ubyte`.
pub fn split_paths(dir: &Path, name: &str, split: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{name}-{split}-images-idx3-ubyte")),
        dir.join(format!("{name}-{split}-labels-idx1-ubyte")),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dataset(labels: Vec<u8>) -> IdxDataset {
        let images = (0..labels.len() * 784)
            .map(|i| (i * 31 % 256) as u8)
            .collect();
        IdxDataset::new(28, 28, images, labels).unwrap()
    }

    fn images_bytes(ds: &IdxDataset) -> Vec<u8> {
        let mut v = Vec::new();
        write_idx_images(ds, &mut v).unwrap();
        v
    }

    fn labels_bytes(ds: &IdxDataset) -> Vec<u8> {
        let mut v = Vec::new();
        write_idx_labels(ds, &mut v).unwrap();
        v
    }

    #[test]
    fn empty_dataset_headers() {
        let ds = IdxDataset::empty();
        assert_eq!(
            images_bytes(&ds),
            [0, 0, 8, 3, 0, 0, 0, 0, 0, 0, 0, 28, 0, 0, 0, 28]
        );
        assert_eq!(labels_bytes(&ds), [0, 0, 8, 1, 0, 0, 0, 0]);
    }

    #[test]
    fn single_blank_image() {
        let ds = IdxDataset::new(28, 28, vec![0; 784], vec![5]).unwrap();
        let bytes = images_bytes(&ds);
        assert_eq!(bytes.len(), 800);
        assert!(bytes[16..].iter().all(|&b| b == 0));
    }

    #[test]
    fn label_payload_order() {
        let ds = dataset(vec![3, 1, 4]);
        let bytes = labels_bytes(&ds);
        assert_eq!(bytes.len(), 11);
        assert_eq!(&bytes[8..], &[3, 1, 4]);
    }

    #[test]
    fn ten_thousand_label_header() {
        let ds = dataset(vec![0; 10_000]);
        assert_eq!(
            &labels_bytes(&ds)[..8],
            &[0, 0, 0x08, 0x01, 0, 0, 0x27, 0x10]
        );
    }

    #[test]
    fn read_errors() {
        let ds = dataset(vec![1, 2]);
        let (img, lab) = (images_bytes(&ds), labels_bytes(&ds));
        assert!(matches!(
            read_idx(&lab, &lab),
            Err(IdxError::WrongMagic {
                file: "images",
                found: 0x801,
                ..
            })
        ));
        assert!(matches!(
            read_idx(&img, &img),
            Err(IdxError::WrongMagic { file: "labels", .. })
        ));
        assert!(matches!(
            read_idx(&img[..100], &lab),
            Err(IdxError::Truncated {
                file: "images",
                offset: 100,
                ..
            })
        ));
        assert!(matches!(
            read_idx(&img[..6], &lab),
            Err(IdxError::Truncated { file: "images", .. })
        ));
        let other = labels_bytes(&dataset(vec![1, 2, 3]));
        assert!(matches!(
            read_idx(&img, &other),
            Err(IdxError::CountMismatch {
                images: 2,
                labels: 3
            })
        ));
        let mut bad = lab.clone();
        bad[9] = 12;
        assert!(matches!(
            read_idx(&img, &bad),
            Err(IdxError::LabelOutOfRange {
                value: 12,
                offset: 9
            })
        ));
    }

    #[test]
    fn failing_sink_reports_progress() {
        struct Limited(usize);
        impl Write for Limited {
            fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                if self.0 < buf.len() {
                    return Err(std::io::Error::other("disk full"));
                }
                self.0 -= buf.len();
                Ok(buf.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let ds = dataset(vec![0; 3]);
        match write_idx_images(&ds, &mut Limited(12)) {
            Err(IdxError::Write { written: 12, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_byte_identical(labels in proptest::collection::vec(0u8..10, 0..40), salt in any::<u8>()) {
            let images: Vec<u8> = (0..labels.len() * 784).map(|i| (i as u8).wrapping_mul(salt)).collect();
            let ds = IdxDataset::new(28, 28, images, labels).unwrap();
            let (img, lab) = (images_bytes(&ds), labels_bytes(&ds));
            let back = read_idx(&img, &lab).unwrap();
            prop_assert_eq!(&back, &ds);
            prop_assert_eq!(images_bytes(&back), img);
            prop_assert_eq!(labels_bytes(&back), lab);
        }
    }
}
