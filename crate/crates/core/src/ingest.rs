//! MNIST IDX ubyte ingestion.
//!
//! Image files start with magic `0x00000803` followed by big-endian `u32`
//! count, rows and cols; label files with magic `0x00000801` and a count.
//! Pixels are scaled by 1/255 and each nonzero image is rescaled to unit L2
//! norm; all-zero images stay zero.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Result, ViperError};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageStore {
    rows: usize,
    cols: usize,
    /// Row-major `N x (rows * cols)`.
    pixels: Vec<f64>,
    labels: Vec<u8>,
    /// Hex SHA-256 over the image bytes followed by the label bytes.
    pub source_digest: String,
}

impl ImageStore {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> Result<&[f64]> {
        let p = self.pixel_count();
        self.pixels
            .get(i * p..(i + 1) * p)
            .ok_or_else(|| ViperError::domain(format!("image index {i} out of range")))
    }

    pub fn label(&self, i: usize) -> Result<u8> {
        self.labels
            .get(i)
            .copied()
            .ok_or_else(|| ViperError::domain(format!("image index {i} out of range")))
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

fn format_err(path: &Path, offset: u64, msg: impl Into<String>) -> ViperError {
    ViperError::Format {
        path: path.to_path_buf(),
        offset,
        msg: msg.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_err(path, offset as u64, "truncated header"))
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<ImageStore> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = std::fs::read(ip)?;
    let labels = std::fs::read(lp)?;
    parse_idx(&images, &labels, ip, lp)
}

/// Parse in-memory IDX image and label files; paths are used for error
/// reporting only.
pub fn parse_idx(images: &[u8], labels: &[u8], images_path: &Path, labels_path: &Path) -> Result<ImageStore> {
    let magic = read_u32(images, 0, images_path)?;
    if magic != IMAGE_MAGIC {
        return Err(format_err(images_path, 0, format!("bad magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}")));
    }
    let count = read_u32(images, 4, images_path)? as usize;
    let rows = read_u32(images, 8, images_path)? as usize;
    let cols = read_u32(images, 12, images_path)? as usize;
    let pixel_count = rows * cols;
    let body = &images[16..];
    let need = count * pixel_count;
    if body.len() < need {
        return Err(format_err(
            images_path,
            (16 + body.len()) as u64,
            format!("truncated: header promises {count} images of {rows}x{cols}"),
        ));
    }

    let lmagic = read_u32(labels, 0, labels_path)?;
    if lmagic != LABEL_MAGIC {
        return Err(format_err(labels_path, 0, format!("bad magic {lmagic:#010x}, expected {LABEL_MAGIC:#010x}")));
    }
    let lcount = read_u32(labels, 4, labels_path)? as usize;
    if lcount != count {
        return Err(format_err(
            labels_path,
            4,
            format!("label count {lcount} differs from image count {count} in {}", images_path.display()),
        ));
    }
    let lbody = &labels[8..];
    if lbody.len() < lcount {
        return Err(format_err(labels_path, (8 + lbody.len()) as u64, "truncated label data"));
    }
    let label_vec = lbody[..lcount].to_vec();
    if let Some(pos) = label_vec.iter().position(|&l| l > 9) {
        return Err(format_err(labels_path, (8 + pos) as u64, format!("label {} outside 0..=9", label_vec[pos])));
    }

    let mut pixels: Vec<f64> = body[..need].iter().map(|&b| b as f64 / 255.0).collect();
    if pixel_count > 0 {
        for row in pixels.chunks_mut(pixel_count) {
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|x| *x /= n);
            }
        }
    }

    let mut hasher = Sha256::new();
    hasher.update(images);
    hasher.update(labels);
    Ok(ImageStore {
        rows,
        cols,
        pixels,
        labels: label_vec,
        source_digest: hex::encode(hasher.finalize()),
    })
}

/// Encode images (raw bytes, row-major) and labels as IDX files. Used to
/// build fixtures and small subsets.
pub fn encode_idx(rows: u32, cols: u32, images: &[Vec<u8>], labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::new();
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&(images.len() as u32).to_be_bytes());
    img.extend_from_slice(&rows.to_be_bytes());
    img.extend_from_slice(&cols.to_be_bytes());
    for im in images {
        img.extend_from_slice(im);
    }
    let mut lab = Vec::new();
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    (img, lab)
}
