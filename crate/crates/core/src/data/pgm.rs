use std::path::Path;

use crate::error::{Error, Result};

/// Single-channel image with values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        crate::error::check_len("image pixels", width * height, pixels.len())?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }
}

/// Binary P5 encoding; pixels are clamped to `[0, 1]` and stored as `round(p * 255)`.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.pixels.iter().map(|&p| {
        let p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        (p * 255.0).round() as u8
    }));
    out
}

pub fn write_pgm(image: &GrayImage, path: &Path) -> Result<()> {
    std::fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path, e))
}

/// Parses a binary PGM with maxval 255.
pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let truncated = |detail: &str| Error::Truncated {
        path: path.into(),
        detail: detail.into(),
    };
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(truncated("incomplete header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::Config(format!(
            "{}: not a binary PGM (magic {:?})",
            path.display(),
            fields[0]
        )));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Config(format!("{}: bad header field {s:?}", path.display())))
    };
    let (w, h, max) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if max != 255 {
        return Err(Error::Config(format!(
            "{}: maxval {max} unsupported",
            path.display()
        )));
    }
    if bytes.len() < pos + w * h {
        return Err(truncated("pixel payload shorter than width*height"));
    }
    GrayImage::new(
        w,
        h,
        bytes[pos..pos + w * h]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect(),
    )
}
