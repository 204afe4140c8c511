//! IDX container parsing (the MNIST distribution format).
//!
//! ```text
//! offset 0   u32 BE  magic: 0x00000803 (u8, 3 dims) or 0x00000801 (u8, 1 dim)
//! offset 4   u32 BE  count
//! offset 8   u32 BE  rows       (3-dim only)
//! offset 12  u32 BE  cols       (3-dim only)
//! then       count * rows * cols bytes, row-major
//! ```

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::image::GrayImage;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            offset,
            message: format!("truncated header: need 4 bytes, {} available", bytes.len().saturating_sub(offset)),
        })
}

fn expect_magic(bytes: &[u8], magic: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != magic {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad magic 0x{found:08x}, expected 0x{magic:08x}"),
        });
    }
    Ok(())
}

fn payload(bytes: &[u8], header: usize, len: usize) -> Result<&[u8]> {
    let end = header.checked_add(len).ok_or_else(|| Error::Parse {
        offset: header,
        message: "declared payload overflows".into(),
    })?;
    if bytes.len() < end {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!("truncated payload: declared {len} bytes, {} present", bytes.len() - header),
        });
    }
    if bytes.len() > end {
        return Err(Error::Parse {
            offset: end,
            message: format!("{} trailing bytes after declared payload", bytes.len() - end),
        });
    }
    Ok(&bytes[header..end])
}

/// Parses an unsigned-byte 3-D IDX tensor into images, in file order.
pub fn parse_idx(bytes: &[u8]) -> Result<Vec<GrayImage>> {
    expect_magic(bytes, IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let overflow = || Error::Parse {
        offset: 4,
        message: format!("dimensions {count}x{rows}x{cols} overflow"),
    };
    let per_image = rows.checked_mul(cols).ok_or_else(overflow)?;
    let total = count.checked_mul(per_image).ok_or_else(overflow)?;
    let data = payload(bytes, 16, total)?;
    if per_image == 0 && count > 0 {
        return Err(Error::Parse {
            offset: 8,
            message: "zero-sized images".into(),
        });
    }
    Ok((0..count)
        .map(|i| GrayImage {
            width: cols,
            height: rows,
            pixels: data[i * per_image..(i + 1) * per_image].to_vec(),
        })
        .collect())
}

/// Parses an unsigned-byte 1-D IDX tensor (MNIST labels).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    expect_magic(bytes, LABELS_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, count)?.to_vec())
}

/// Reads a file, transparently inflating it when it starts with the gzip magic.
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}
