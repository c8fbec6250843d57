//! Portable graymap (PGM) reading and writing.
//!
//! Both the binary (`P5`) and plain (`P2`) variants are accepted. Samples are
//! one byte when `maxval <= 255` and two big-endian bytes otherwise.

use std::io::Write;

use thiserror::Error;

use crate::image::GrayImage;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("empty input")]
    Empty,
    #[error("bad magic at byte 0: expected P2 or P5")]
    BadMagic,
    #[error("{field}: missing or malformed value at byte {offset}")]
    BadHeaderField { field: &'static str, offset: usize },
    #[error("{field} is zero at byte {offset}")]
    ZeroDimension { field: &'static str, offset: usize },
    #[error("maxval is zero at byte {offset}")]
    ZeroMaxval { offset: usize },
    #[error("maxval {value} exceeds 65535 at byte {offset}")]
    MaxvalTooLarge { value: u64, offset: usize },
    #[error("truncated payload at byte {offset}: expected {expected} sample bytes, found {found}")]
    Truncated {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("sample {value} exceeds maxval {maxval} at byte {offset}")]
    SampleOutOfRange {
        value: u64,
        maxval: u64,
        offset: usize,
    },
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    /// Skips whitespace and `#` comments.
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, field: &'static str) -> Result<(u64, usize), PgmError> {
        self.skip_separators();
        let start = self.pos;
        let mut value: u64 = 0;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            value = value
                .saturating_mul(10)
                .saturating_add(u64::from(self.bytes[self.pos] - b'0'));
            self.pos += 1;
        }
        let terminated = self.pos == self.bytes.len()
            || self.bytes[self.pos].is_ascii_whitespace()
            || self.bytes[self.pos] == b'#';
        if self.pos == start || !terminated {
            return Err(PgmError::BadHeaderField {
                field,
                offset: start,
            });
        }
        Ok((value, start))
    }
}

/// Parses a P2 or P5 graymap into an image with intensities scaled by `1/maxval`.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    if bytes.is_empty() {
        return Err(PgmError::Empty);
    }
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(PgmError::BadMagic),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let (width, w_off) = cur.number("width")?;
    if width == 0 {
        return Err(PgmError::ZeroDimension {
            field: "width",
            offset: w_off,
        });
    }
    let (height, h_off) = cur.number("height")?;
    if height == 0 {
        return Err(PgmError::ZeroDimension {
            field: "height",
            offset: h_off,
        });
    }
    let (maxval, m_off) = cur.number("maxval")?;
    if maxval == 0 {
        return Err(PgmError::ZeroMaxval { offset: m_off });
    }
    if maxval > 65535 {
        return Err(PgmError::MaxvalTooLarge {
            value: maxval,
            offset: m_off,
        });
    }
    let count = (width as usize)
        .checked_mul(height as usize)
        .ok_or(PgmError::BadHeaderField {
            field: "height",
            offset: h_off,
        })?;
    let scale = 1.0 / maxval as f64;
    let mut pixels = Vec::with_capacity(count);

    if binary {
        // Exactly one whitespace byte separates maxval from the raster.
        let start = cur.pos + 1;
        let sample_bytes = if maxval > 255 { 2 } else { 1 };
        let expected = count * sample_bytes;
        let available = bytes.len().saturating_sub(start);
        if available < expected {
            return Err(PgmError::Truncated {
                offset: start + available,
                expected,
                found: available,
            });
        }
        let raster = &bytes[start..start + expected];
        for (i, chunk) in raster.chunks_exact(sample_bytes).enumerate() {
            let v = if sample_bytes == 2 {
                u64::from(u16::from_be_bytes([chunk[0], chunk[1]]))
            } else {
                u64::from(chunk[0])
            };
            if v > maxval {
                return Err(PgmError::SampleOutOfRange {
                    value: v,
                    maxval,
                    offset: start + i * sample_bytes,
                });
            }
            pixels.push(v as f64 * scale);
        }
    } else {
        for i in 0..count {
            cur.skip_separators();
            if cur.pos >= bytes.len() {
                return Err(PgmError::Truncated {
                    offset: cur.pos,
                    expected: count,
                    found: i,
                });
            }
            let (v, off) = cur.number("sample")?;
            if v > maxval {
                return Err(PgmError::SampleOutOfRange {
                    value: v,
                    maxval,
                    offset: off,
                });
            }
            pixels.push(v as f64 * scale);
        }
    }

    Ok(
        GrayImage::from_pixels(height as usize, width as usize, pixels)
            .expect("dimensions validated above"),
    )
}

/// Writes an 8-bit binary (`P5`) graymap.
pub fn write_pgm<W: Write>(img: &GrayImage, sink: &mut W) -> std::io::Result<usize> {
    let header = format!("P5\n{} {}\n255\n", img.width(), img.height());
    sink.write_all(header.as_bytes())?;
    let raster = img.to_bytes();
    sink.write_all(&raster)?;
    Ok(header.len() + raster.len())
}

pub fn serialize_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::new();
    write_pgm(img, &mut out).expect("writing to a Vec cannot fail");
    out
}
