use std::path::Path;

use super::{Dataset, Sample};
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct Header {
    dims: Vec<usize>,
    payload_offset: usize,
}

fn parse_header(bytes: &[u8], path: &Path, magic: u32) -> Result<Header> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: path.into(),
            detail: format!("{} bytes, header needs 4", bytes.len()),
        });
    }
    let found = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if found != magic {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: magic,
            found,
        });
    }
    let ndim = (magic & 0xff) as usize;
    let end = 4 + 4 * ndim;
    if bytes.len() < end {
        return Err(Error::Truncated {
            path: path.into(),
            detail: format!("header needs {end} bytes, file has {}", bytes.len()),
        });
    }
    let dims = (0..ndim)
        .map(|i| {
            let o = 4 + 4 * i;
            u32::from_be_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
        })
        .collect();
    Ok(Header {
        dims,
        payload_offset: end,
    })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads an IDX image/label pair; pixels are scaled by 1/255.
pub fn load_idx(images_path: &Path, labels_path: &Path, limit: Option<usize>) -> Result<Dataset> {
    let img = read(images_path)?;
    let lab = read(labels_path)?;
    let ih = parse_header(&img, images_path, IMAGES_MAGIC)?;
    let lh = parse_header(&lab, labels_path, LABELS_MAGIC)?;
    let (n_img, rows, cols) = (ih.dims[0], ih.dims[1], ih.dims[2]);
    let n_lab = lh.dims[0];
    if n_img != n_lab {
        return Err(Error::CountMismatch {
            images: n_img,
            labels: n_lab,
        });
    }
    let plane = rows * cols;
    let need = ih.payload_offset + n_img * plane;
    if img.len() < need {
        return Err(Error::Truncated {
            path: images_path.into(),
            detail: format!(
                "{n_img} images of {rows}x{cols} need {need} bytes, file has {}",
                img.len()
            ),
        });
    }
    if lab.len() < lh.payload_offset + n_lab {
        return Err(Error::Truncated {
            path: labels_path.into(),
            detail: format!(
                "{n_lab} labels need {} bytes, file has {}",
                lh.payload_offset + n_lab,
                lab.len()
            ),
        });
    }
    let n = limit.map_or(n_img, |l| l.min(n_img));
    let samples: Vec<Sample> = (0..n)
        .map(|i| {
            let start = ih.payload_offset + i * plane;
            Sample {
                x: img[start..start + plane]
                    .iter()
                    .map(|&b| b as f64 / 255.0)
                    .collect(),
                label: lab[lh.payload_offset + i] as usize,
                source: format!("idx:{i}"),
            }
        })
        .collect();
    let classes = samples
        .iter()
        .map(|s| s.label + 1)
        .max()
        .unwrap_or(0)
        .max(10);
    Dataset::new(samples, classes, vec![1, rows, cols])
}
