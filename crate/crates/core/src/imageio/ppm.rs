use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 8-bit RGB image, row-major, interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageU8 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl ImageU8 {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!("image size {width}x{height} must be positive")));
        }
        if data.len() != 3 * width * height {
            return Err(Error::ShapeMismatch {
                op: "ImageU8::new",
                dim: "byte count",
                expected: 3 * width * height,
                actual: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format("PPM", start as u64, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("PPM", start as u64, format!("{what} out of range")))
    }
}

/// Parses a binary P6 PPM with maxval 255.
pub fn decode_ppm(bytes: &[u8]) -> Result<ImageU8> {
    if !bytes.starts_with(b"P6") {
        return Err(Error::format("PPM", 0, "missing P6 magic"));
    }
    let mut hdr = Header { bytes, pos: 2 };
    if !hdr.bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(Error::format("PPM", 2, "expected whitespace after magic"));
    }
    let width = hdr.number("width")?;
    let height = hdr.number("height")?;
    hdr.skip_space_and_comments();
    let maxval_at = hdr.pos as u64;
    let maxval = hdr.number("maxval")?;
    if maxval != 255 {
        return Err(Error::format("PPM", maxval_at, format!("maxval {maxval} unsupported, expected 255")));
    }
    if !bytes.get(hdr.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format("PPM", hdr.pos as u64, "expected single whitespace before pixel data"));
    }
    let start = hdr.pos + 1;
    if width == 0 || height == 0 {
        return Err(Error::format("PPM", 3, format!("image size {width}x{height} must be positive")));
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| Error::format("PPM", 3, "image size overflows"))?;
    let payload = &bytes[start..];
    if payload.len() < need {
        return Err(Error::format(
            "PPM",
            bytes.len() as u64,
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    if payload.len() > need {
        return Err(Error::format("PPM", (start + need) as u64, "trailing bytes after pixel data"));
    }
    ImageU8::new(width, height, payload.to_vec())
}

pub fn encode_ppm(img: &ImageU8) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<ImageU8> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}

pub fn write_ppm(path: impl AsRef<Path>, img: &ImageU8) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
}

/// `[3, H, W]` tensor with values `byte / 255`.
pub fn u8_to_float(img: &ImageU8) -> Tensor {
    let plane = img.width * img.height;
    Tensor::from_fn(&[3, img.height, img.width], |i| {
        let (c, p) = (i / plane, i % plane);
        img.data[p * 3 + c] as f64 / 255.0
    })
}

/// Quantizes a `[3, H, W]` tensor: `round_ties_even(clamp(v, 0, 1) * 255)`.
pub fn float_to_u8(t: &Tensor) -> Result<ImageU8> {
    let (c, h, w) = t.dims3()?;
    if c != 3 {
        return Err(Error::ShapeMismatch { op: "float_to_u8", dim: "channels", expected: 3, actual: c });
    }
    let plane = h * w;
    let mut data = vec![0u8; 3 * plane];
    for (i, &v) in t.data().iter().enumerate() {
        let (c, p) = (i / plane, i % plane);
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        data[p * 3 + c] = (v * 255.0).round_ties_even() as u8;
    }
    ImageU8::new(w, h, data)
}

/// Reads a PPM straight into a float tensor.
pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor> {
    Ok(u8_to_float(&read_ppm(path)?))
}

pub fn write_image(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    write_ppm(path, &float_to_u8(t)?)
}
