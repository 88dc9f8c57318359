use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"PTNS";
pub const TENSOR_VERSION: u32 = 1;

/// Little-endian cursor that reports byte offsets in its errors.
pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
    pub format: &'static str,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8], format: &'static str) -> Self {
        Self { bytes, pos: 0, format }
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(self.format, self.bytes.len() as u64, format!("truncated while reading {what}"))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != expected {
            return Err(Error::format(
                self.format,
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expected)
                ),
            ));
        }
        Ok(())
    }

    pub fn version(&mut self, expected: u32) -> Result<()> {
        let at = self.pos as u64;
        let v = self.u32("version")?;
        if v != expected {
            return Err(Error::format(self.format, at, format!("unsupported version {v}, expected {expected}")));
        }
        Ok(())
    }

    /// `ndim: u32` followed by `ndim` u64 dimensions.
    pub fn shape(&mut self) -> Result<Vec<usize>> {
        let at = self.pos as u64;
        let ndim = self.u32("ndim")? as usize;
        if ndim > 16 {
            return Err(Error::format(self.format, at, format!("implausible rank {ndim}")));
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let at = self.pos as u64;
            let d = self.u64("dimension")?;
            if d == 0 || d > u32::MAX as u64 {
                return Err(Error::format(self.format, at, format!("invalid dimension {d}")));
            }
            dims.push(d as usize);
        }
        let at_end = self.pos as u64;
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= (1 << 40))
            .ok_or_else(|| Error::format(self.format, at_end, "element count overflows"))?;
        Ok(dims)
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.saturating_mul(8), "payload")?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(self.format, self.pos as u64, "trailing bytes"));
        }
        Ok(())
    }
}

pub(crate) fn put_shape(out: &mut Vec<u8>, shape: &[usize]) {
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
}

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * t.shape().len() + 8 * t.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    put_shape(&mut out, t.shape());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut r = Reader::new(bytes, "PTNS");
    r.magic(TENSOR_MAGIC)?;
    r.version(TENSOR_VERSION)?;
    let shape = r.shape()?;
    let n = shape.iter().product();
    let data = r.f64s(n)?;
    r.finish()?;
    Tensor::new(shape, data)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    decode_tensor(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_tensor(t)).map_err(|e| Error::io(path, e))
}
