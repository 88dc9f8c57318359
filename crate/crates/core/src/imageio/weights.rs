//! `PPWA` weight archives.
//!
//! ```text
//! "PPWA" | version: u32 = 1 | count: u32
//! count × { name_len: u32 | name: utf-8 | ndim: u32 | dims: u64[ndim] | offset: u64 }
//! payload_len: u64 | payload: little-endian f64
//! ```
//!
//! Entries are sorted by name; `offset` is in bytes from the payload start.
//! All integers are little-endian.

use std::path::Path;

use super::ptns::{put_shape, Reader};
use crate::error::{Error, Result};
use crate::tensor::{Tensor, TensorMap};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"PPWA";
pub const WEIGHTS_VERSION: u32 = 1;

/// A named tensor collection as stored on disk.
pub type WeightArchive = TensorMap;

/// Serializes named tensors, rejecting duplicate names.
pub fn encode_weights<'a, I>(entries: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = (&'a str, &'a Tensor)>,
{
    let mut sorted: Vec<(&str, &Tensor)> = entries.into_iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidArgument(format!("duplicate tensor name {:?} in weight archive", w[0].0)));
    }
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(sorted.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (name, t) in &sorted {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        put_shape(&mut out, t.shape());
        out.extend_from_slice(&offset.to_le_bytes());
        offset += 8 * t.len() as u64;
    }
    out.extend_from_slice(&offset.to_le_bytes());
    for (_, t) in &sorted {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_weights(bytes: &[u8]) -> Result<WeightArchive> {
    let mut r = Reader::new(bytes, "PPWA");
    r.magic(WEIGHTS_MAGIC)?;
    r.version(WEIGHTS_VERSION)?;
    let count = r.u32("entry count")? as usize;
    let mut entries = Vec::with_capacity(count.min(4096));
    let mut prev: Option<String> = None;
    for _ in 0..count {
        let at = r.pos as u64;
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::format("PPWA", at, "tensor name is not UTF-8"))?
            .to_string();
        if let Some(p) = &prev {
            if *p >= name {
                let why = if *p == name { "duplicate" } else { "unsorted" };
                return Err(Error::format("PPWA", at, format!("{why} tensor name {name:?}")));
            }
        }
        let shape = r.shape()?;
        let offset = r.u64("offset")?;
        prev = Some(name.clone());
        entries.push((name, shape, offset, at));
    }
    let len_at = r.pos as u64;
    let payload_len = r.u64("payload length")?;
    let payload = r.take(usize::try_from(payload_len).unwrap_or(usize::MAX), "payload")?;
    r.finish()?;

    let mut ranges = Vec::with_capacity(entries.len());
    for (name, shape, offset, at) in &entries {
        let n: usize = shape.iter().product();
        let end = offset.checked_add(8 * n as u64).filter(|&e| e <= payload_len && offset % 8 == 0);
        let Some(end) = end else {
            return Err(Error::format("PPWA", *at, format!("tensor {name:?} does not fit the payload")));
        };
        ranges.push((*offset, end, name.as_str()));
    }
    ranges.sort();
    for w in ranges.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::format("PPWA", len_at, format!("tensors {:?} and {:?} overlap", w[0].2, w[1].2)));
        }
    }

    let mut archive = WeightArchive::new();
    for (name, shape, offset, _) in entries {
        let n: usize = shape.iter().product();
        let start = offset as usize;
        let data =
            payload[start..start + 8 * n].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        archive.insert(name, Tensor::new(shape, data)?);
    }
    Ok(archive)
}

pub fn save_weights(path: impl AsRef<Path>, archive: &WeightArchive) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_weights(archive.iter())?).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightArchive> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArchive(path.to_path_buf()));
    }
    decode_weights(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_archive_round_trip() {
        let bytes = encode_weights(WeightArchive::new().iter()).unwrap();
        assert!(decode_weights(&bytes).unwrap().is_empty());
    }

    #[test]
    fn duplicate_name_rejected_on_save() {
        let t = Tensor::zeros(&[2]);
        let err = encode_weights([("a", &t), ("a", &t)]).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn manifest_sorted_by_name() {
        let (a, b) = (Tensor::full(&[1], 1.0), Tensor::full(&[2], 2.0));
        let bytes = encode_weights([("zeta", &a), ("alpha", &b)]).unwrap();
        let first_name = &bytes[16..21];
        assert_eq!(first_name, b"alpha");
    }

    #[test]
    fn overlapping_offsets_rejected() {
        let t = Tensor::full(&[2], 1.0);
        let mut bytes = encode_weights([("a", &t), ("b", &t)]).unwrap();
        // second entry's offset field: header 12 + entry a (4+1+4+8+8) + b's name/shape (4+1+4+8)
        let off = 12 + 25 + 17;
        bytes[off..off + 8].copy_from_slice(&8u64.to_le_bytes());
        let msg = decode_weights(&bytes).unwrap_err().to_string();
        assert!(msg.contains("overlap"), "{msg}");
    }

    #[test]
    fn missing_file_names_archive() {
        let err = load_weights("/nonexistent/model.ppwa").unwrap_err();
        assert!(err.to_string().contains("model.ppwa"));
    }
}
