//! MNIST IDX containers (`idx3-ubyte` images, `idx1-ubyte` labels), optionally
//! gzip-compressed.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixels, `count × rows × cols` bytes.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[i * size..(i + 1) * size]
    }
}

fn format(offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| format(offset as u64, "truncated header"))
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(format(0, format!("image magic {magic}, expected {IMAGE_MAGIC}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(format(
            bytes.len() as u64,
            format!("image data truncated: {} of {need} bytes", body.len()),
        ));
    }
    if body.len() > need {
        return Err(format((16 + need) as u64, "trailing bytes after image data"));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(format(0, format!("label magic {magic}, expected {LABEL_MAGIC}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(format(
            bytes.len() as u64,
            format!("label data truncated: {} of {count} bytes", body.len()),
        ));
    }
    if body.len() > count {
        return Err(format((8 + count) as u64, "trailing bytes after label data"));
    }
    Ok(body.to_vec())
}

/// Loads an image file and its label file and checks that the counts agree.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<(IdxImages, Vec<u8>)> {
    let images = parse_idx_images(&read_maybe_gz(images_path)?)?;
    let labels = parse_idx_labels(&read_maybe_gz(labels_path)?)?;
    if images.count != labels.len() {
        return Err(format(
            4,
            format!("{} images but {} labels", images.count, labels.len()),
        ));
    }
    Ok((images, labels))
}

fn find(dir: &Path, stem: &str) -> Option<PathBuf> {
    [stem.to_string(), format!("{stem}.gz"), stem.replacen("-idx", ".idx", 1)]
        .into_iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
}

/// Loads the standard MNIST train (`train = true`) or test split from a
/// directory holding the usual four files (plain or `.gz`).
pub fn load_mnist_split(dir: &Path, train: bool) -> Result<(IdxImages, Vec<u8>)> {
    let prefix = if train { "train" } else { "t10k" };
    let images = format!("{prefix}-images-idx3-ubyte");
    let labels = format!("{prefix}-labels-idx1-ubyte");
    let missing = |name: &str| {
        Error::io(
            dir.join(name),
            std::io::Error::new(std::io::ErrorKind::NotFound, "MNIST file not found"),
        )
    };
    let ip = find(dir, &images).ok_or_else(|| missing(&images))?;
    let lp = find(dir, &labels).ok_or_else(|| missing(&labels))?;
    load_idx(&ip, &lp)
}
