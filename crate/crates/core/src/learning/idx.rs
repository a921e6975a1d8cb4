//! Reader for the IDX byte format used by the MNIST distribution.
//!
//! Images: magic `0x00000803`, then big-endian `u32` count, rows, cols, then `u8` pixels.
//! Labels: magic `0x00000801`, then big-endian `u32` count, then `u8` labels.

use std::path::Path;

use super::data::Sample;
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx(format!("truncated header at byte {at}")))
}

/// Pixel rows scaled to `[0, 1]`.
pub fn parse_images(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Idx(format!("bad image magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let size = rows * cols;
    let body = &bytes[16..];
    if body.len() < count * size {
        return Err(Error::Idx(format!(
            "expected {} pixel bytes, found {}",
            count * size,
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(size.max(1))
        .take(count)
        .map(|img| img.iter().map(|p| f64::from(*p) / 255.0).collect())
        .collect())
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Idx(format!("bad label magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Idx(format!(
            "expected {count} labels, found {}",
            body.len()
        )));
    }
    Ok(body[..count].iter().map(|l| usize::from(*l)).collect())
}

/// Loads up to `limit` samples from an image/label file pair.
pub fn load(images: &Path, labels: &Path, limit: Option<usize>) -> Result<Vec<Sample>> {
    let xs = parse_images(&std::fs::read(images)?)?;
    let ys = parse_labels(&std::fs::read(labels)?)?;
    if xs.len() != ys.len() {
        return Err(Error::Idx(format!("{} images but {} labels", xs.len(), ys.len())));
    }
    let take = limit.unwrap_or(xs.len()).min(xs.len());
    Ok(xs
        .into_iter()
        .zip(ys)
        .take(take)
        .map(|(x, y)| Sample::new(x, y))
        .collect())
}
