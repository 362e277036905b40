//! Portable float map (colour `PF`) reading and writing. Files are written
//! little-endian (negative scale), rows bottom to top.

use std::fs;
use std::io;
use std::path::Path;

use crate::renderer::Image;

#[derive(Debug, thiserror::Error)]
pub enum PfmError {
    #[error("malformed PFM header: {0}")]
    Header(String),
    #[error("PFM is {found_w}x{found_h}, expected {want_w}x{want_h}")]
    Dimensions {
        found_w: usize,
        found_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("PFM payload has {found} bytes, expected {expected}")]
    ShortRead { found: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode_pfm(image: &Image) -> Vec<u8> {
    let mut out = format!("PF\n{} {}\n-1.0\n", image.width, image.height).into_bytes();
    out.reserve(image.width * image.height * 12);
    for y in (0..image.height).rev() {
        for x in 0..image.width {
            for c in image.get(x, y) {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
    }
    out
}

// Splits off one whitespace-terminated header token.
fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str, PfmError> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos || *pos >= bytes.len() {
        return Err(PfmError::Header("truncated header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| PfmError::Header("non-ASCII header".into()))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Image, PfmError> {
    let mut pos = 0;
    let magic = token(bytes, &mut pos)?;
    if magic != "PF" {
        return Err(PfmError::Header(format!("unsupported magic {magic:?}")));
    }
    let dim = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| PfmError::Header(format!("bad dimension {s:?}")))
    };
    let width = dim(token(bytes, &mut pos)?)?;
    let height = dim(token(bytes, &mut pos)?)?;
    let scale: f64 = token(bytes, &mut pos)?
        .parse()
        .map_err(|_| PfmError::Header("bad scale".into()))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(PfmError::Header("zero scale".into()));
    }
    // Exactly one whitespace byte separates the header from the payload.
    pos += 1;
    let expected = width * height * 12;
    let payload = &bytes[pos.min(bytes.len())..];
    if payload.len() < expected {
        return Err(PfmError::ShortRead {
            found: payload.len(),
            expected,
        });
    }
    let little = scale < 0.0;
    let mut image = Image::new(width, height);
    for (k, chunk) in payload[..expected].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (p, c) = (k / 3, k % 3);
        let (x, y) = (p % width, height - 1 - p / width);
        image.pixels[y * width + x][c] = v as f64;
    }
    Ok(image)
}

pub fn write_pfm(path: impl AsRef<Path>, image: &Image) -> Result<(), PfmError> {
    fs::write(path, encode_pfm(image))?;
    Ok(())
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Image, PfmError> {
    decode_pfm(&fs::read(path)?)
}

/// [`read_pfm`] that also checks the dimensions.
pub fn read_pfm_sized(path: impl AsRef<Path>, width: usize, height: usize) -> Result<Image, PfmError> {
    let image = read_pfm(path)?;
    if image.width != width || image.height != height {
        return Err(PfmError::Dimensions {
            found_w: image.width,
            found_h: image.height,
            want_w: width,
            want_h: height,
        });
    }
    Ok(image)
}

/// Row-major `height × width` grid of RGB values as an image.
pub fn grid_image(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Image {
    Image { width, height, pixels }
}
