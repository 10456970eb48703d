//! Binary PGM (P5) parsing and writing, plus the bridge between 8-bit
//! pixels and `f64` matrices.

use thiserror::Error;

use crate::linalg::Matrix;

/// Errors produced while parsing or building images.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImageError {
    #[error("not a binary PGM: the signature must be P5")]
    BadSignature,
    #[error("maxval {maxval} unsupported, only 8-bit data (maxval <= 255) is handled")]
    MaxvalUnsupported { maxval: u64 },
    #[error("pixel data truncated: expected {expected} bytes, got {got}")]
    TruncatedPixelData { expected: usize, got: usize },
    #[error("malformed header: {0}")]
    MalformedHeader(&'static str),
    #[error("pixel count mismatch: {width}x{height} needs {expected} bytes, got {got}")]
    PixelCountMismatch {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },
    #[error("matrix contains a non-finite entry")]
    NonFiniteInput,
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageGray {
    /// Fixed dynamic range of the pixel data.
    pub const MAXVAL: u8 = 255;

    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::MalformedHeader("dimensions must be positive"));
        }
        let expected = width
            .checked_mul(height)
            .ok_or(ImageError::MalformedHeader("image dimensions overflow"))?;
        if pixels.len() != expected {
            return Err(ImageError::PixelCountMismatch {
                width,
                height,
                expected,
                got: pixels.len(),
            });
        }
        Ok(ImageGray {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

/// Parses a binary PGM. The header tolerates any amount of whitespace and
/// `#` comments between tokens; bytes past the raster are ignored. Values
/// are taken as stored, whatever the declared maxval up to 255.
pub fn read_pgm(bytes: &[u8]) -> Result<ImageGray, ImageError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(ImageError::BadSignature);
    }
    let mut pos = 2;
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() || *b == b'#' => {}
        _ => return Err(ImageError::MalformedHeader("expected whitespace after P5")),
    }
    let width = read_header_number(bytes, &mut pos)?;
    let height = read_header_number(bytes, &mut pos)?;
    let maxval = read_header_number(bytes, &mut pos)?;
    if maxval > 255 {
        return Err(ImageError::MaxvalUnsupported { maxval });
    }
    if maxval == 0 {
        return Err(ImageError::MalformedHeader("maxval must be positive"));
    }
    // Exactly one whitespace byte separates the header from the raster; a
    // comment is not allowed here because # would be pixel data.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(ImageError::MalformedHeader(
                "expected a single whitespace byte before the raster",
            ))
        }
    }
    let (width, height) = (to_dim(width)?, to_dim(height)?);
    if width == 0 || height == 0 {
        return Err(ImageError::MalformedHeader("dimensions must be positive"));
    }
    let expected = width
        .checked_mul(height)
        .ok_or(ImageError::MalformedHeader("image dimensions overflow"))?;
    let got = bytes.len() - pos;
    if got < expected {
        return Err(ImageError::TruncatedPixelData { expected, got });
    }
    ImageGray::new(width, height, bytes[pos..pos + expected].to_vec())
}

fn to_dim(value: u64) -> Result<usize, ImageError> {
    usize::try_from(value).map_err(|_| ImageError::MalformedHeader("dimension overflows"))
}

fn read_header_number(bytes: &[u8], pos: &mut usize) -> Result<u64, ImageError> {
    skip_whitespace_and_comments(bytes, pos);
    let start = *pos;
    let mut value: u64 = 0;
    while let Some(&b) = bytes.get(*pos) {
        if !b.is_ascii_digit() {
            break;
        }
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add(u64::from(b - b'0')))
            .ok_or(ImageError::MalformedHeader("header number overflows"))?;
        *pos += 1;
    }
    if *pos == start {
        return Err(ImageError::MalformedHeader("expected a decimal number"));
    }
    Ok(value)
}

fn skip_whitespace_and_comments(bytes: &[u8], pos: &mut usize) {
    while let Some(&b) = bytes.get(*pos) {
        if b.is_ascii_whitespace() {
            *pos += 1;
        } else if b == b'#' {
            while let Some(&c) = bytes.get(*pos) {
                *pos += 1;
                if c == b'\n' {
                    break;
                }
            }
        } else {
            break;
        }
    }
}

/// Serializes to the canonical byte form: `P5\n{width} {height}\n255\n`
/// followed by the raw raster.
pub fn write_pgm(img: &ImageGray) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// Clamps to `[0, 255]` and rounds half away from zero: the one pixel
/// re-quantization rule used everywhere a real value becomes a pixel.
pub fn clamp_round_u8(x: f64) -> u8 {
    x.clamp(0.0, 255.0).round() as u8
}

/// Rec. 601 luma weighting of an RGB triple.
pub fn to_gray(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    clamp_round_u8(y)
}

/// Widens pixels to an `f64` matrix; rows follow image rows.
pub fn image_to_matrix(img: &ImageGray) -> Matrix {
    let data = img.pixels.iter().map(|&p| f64::from(p)).collect();
    Matrix::from_vec(img.height, img.width, data)
        .expect("a valid image always forms a valid matrix")
}

/// Re-quantizes a matrix into an 8-bit image with [`clamp_round_u8`].
pub fn matrix_to_image(m: &Matrix) -> Result<ImageGray, ImageError> {
    if !m.as_slice().iter().all(|x| x.is_finite()) {
        return Err(ImageError::NonFiniteInput);
    }
    let pixels = m.as_slice().iter().map(|&x| clamp_round_u8(x)).collect();
    ImageGray::new(m.cols(), m.rows(), pixels)
}
