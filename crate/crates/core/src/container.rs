//! Self-describing binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    b"LRTC"
//! version  u32 (= 1)
//! n_meta   u32, then n_meta × { key: u32 len + utf8, value: u32 len + utf8 }
//! n_tensor u32, then n_tensor × { name: u32 len + utf8, rank: u32,
//!                                 extents: rank × u64, data: Π extents × f64 }
//! ```
//!
//! Metadata and tensors keep insertion order, so writing the same container
//! twice yields identical bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"LRTC";
pub const VERSION: u32 = 1;
pub const EXTENSION: &str = "lrt";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    meta: Vec<(String, String)>,
    tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.set_meta(key, value);
        self
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.meta.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.meta.push((key, value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Metadata value parsed as `T`, with a format error naming the key.
    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .meta(key)
            .ok_or_else(|| Error::Format(format!("container lacks metadata key '{key}'")))?;
        raw.parse()
            .map_err(|_| Error::Format(format!("metadata '{key}' = '{raw}' is malformed")))
    }

    pub fn meta_entries(&self) -> &[(String, String)] {
        &self.meta
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensors(&self) -> &[(String, Tensor)] {
        &self.tensors
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &e in t.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not a tensor container".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported container version {version}"
            )));
        }
        let mut c = Container::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            c.meta.push((k, v));
        }
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| Error::Format("tensor too large".into()))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            let t = Tensor::new(&shape, data)
                .map_err(|e| Error::Format(format!("tensor '{name}': {e}")))?;
            c.tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after last tensor".into()));
        }
        Ok(c)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(path.display().to_string()),
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated container".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format("metadata is not utf-8".into()))
    }
}

/// Encodes a `[1 × H × W]` or `[H × W]` image with values in `[0, 1]` as a
/// 16-bit binary portable graymap. Values are clamped before quantisation.
pub fn encode_pgm16(image: &Tensor) -> Result<Vec<u8>> {
    let (h, w) = match image.shape() {
        &[1, h, w] | &[h, w] => (h, w),
        s => {
            return Err(Error::dim(format!(
                "PGM needs a single-channel image, got {s:?}"
            )))
        }
    };
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for &v in image.data() {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    Ok(out)
}

pub fn write_pgm16(path: &Path, image: &Tensor) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, encode_pgm16(image)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut c = Container::new()
            .with_meta("id", "img0001")
            .with_meta("alpha", 0.5);
        c.push(
            "u",
            Tensor::from_fn(&[1, 3, 2], |i| (i as f64).sqrt() - 0.1),
        );
        c.push("s", Tensor::scalar(f64::MIN_POSITIVE));
        let bytes = c.to_bytes();
        let back = Container::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.meta_parse::<f64>("alpha").unwrap(), 0.5);
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(Container::from_bytes(b"XXXX\x01\0\0\0").is_err());
        let mut bytes = Container::new().with_meta("k", "v").to_bytes();
        bytes.push(0);
        assert!(Container::from_bytes(&bytes).is_err());
        let bytes = Container::new().with_meta("k", "v").to_bytes();
        assert!(Container::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn pgm_header_and_samples() {
        let img = Tensor::new(&[1, 1, 2], vec![0.0, 1.0]).unwrap();
        let bytes = encode_pgm16(&img).unwrap();
        assert!(bytes.starts_with(b"P5\n2 1\n65535\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 0, 0xff, 0xff]);
    }
}
