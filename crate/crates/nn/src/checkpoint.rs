//! Versioned binary container of named `f64` arrays.
//!
//! All integers little-endian:
//!
//! ```text
//! magic      8 bytes  "SNAVCKPT"
//! version    u32      currently 1
//! n_meta     u32
//!   key_len u32, key utf-8, val_len u32, val utf-8        (n_meta times)
//! n_arrays   u32
//!   name_len u32, name utf-8, ndim u32, dims u64 * ndim,
//!   offset u64 (bytes into the data section), count u64,
//!   crc32 u32 of the array's data bytes                   (n_arrays times)
//! data       f64 little-endian values, arrays back to back
//! ```

use std::path::Path;

use crate::error::{NnError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SNAVCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self { name: name.into(), shape, data }
    }

    pub fn from_tensor(name: impl Into<String>, t: &Tensor) -> Self {
        Self::new(name, vec![t.rows(), t.cols()], t.data().to_vec())
    }

    /// Reads back as a `rows x cols` tensor; any shape with the same element
    /// count is rejected unless it is exactly `[rows, cols]`, `[rows * cols]`
    /// with `rows == 1`, or `[1]` for a scalar.
    pub fn to_tensor(&self, (rows, cols): (usize, usize)) -> Result<Tensor> {
        let ok = self.shape == [rows, cols] || (rows == 1 && self.shape == [cols]);
        if !ok {
            return Err(NnError::CorruptArray {
                name: self.name.clone(),
                detail: format!("shape {:?}, expected [{rows}, {cols}]", self.shape),
            });
        }
        Tensor::new(rows, cols, self.data.clone())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub arrays: Vec<NamedArray>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(NnError::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|_| NnError::Checkpoint(format!("{what} is not utf-8")))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn data_bytes(data: &[f64]) -> Vec<u8> {
    data.iter().flat_map(|x| x.to_le_bytes()).collect()
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, a: NamedArray) {
        self.arrays.push(a);
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        match self.meta.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.meta.push((key, value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
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
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        let mut data = Vec::new();
        for a in &self.arrays {
            put_str(&mut out, &a.name);
            out.extend_from_slice(&(a.shape.len() as u32).to_le_bytes());
            for &d in &a.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            let bytes = data_bytes(&a.data);
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(a.data.len() as u64).to_le_bytes());
            out.extend_from_slice(&crc32fast::hash(&bytes).to_le_bytes());
            offset += bytes.len() as u64;
            data.extend_from_slice(&bytes);
        }
        out.extend_from_slice(&data);
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(NnError::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        let n_meta = r.u32("metadata count")?;
        let mut meta = Vec::new();
        for _ in 0..n_meta {
            let k = r.string("metadata key")?;
            let v = r.string("metadata value")?;
            meta.push((k, v));
        }
        let n = r.u32("array count")?;
        let mut entries = Vec::new();
        for _ in 0..n {
            let name = r.string("array name")?;
            let ndim = r.u32(&format!("ndim of {name}"))?;
            let shape = (0..ndim)
                .map(|_| r.u64(&format!("shape of {name}")).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let offset = r.u64(&format!("offset of {name}"))? as usize;
            let count = r.u64(&format!("count of {name}"))? as usize;
            let crc = r.u32(&format!("checksum of {name}"))?;
            entries.push((name, shape, offset, count, crc));
        }
        let data = &buf[r.pos..];
        let mut arrays = Vec::new();
        for (name, shape, offset, count, crc) in entries {
            let corrupt = |detail: String| NnError::CorruptArray { name: name.clone(), detail };
            if shape.iter().product::<usize>() != count {
                return Err(corrupt(format!("shape {shape:?} does not hold {count} values")));
            }
            let end = offset.checked_add(count * 8).filter(|&e| e <= data.len());
            let Some(end) = end else {
                return Err(corrupt("data runs past end of file".into()));
            };
            let bytes = &data[offset..end];
            if crc32fast::hash(bytes) != crc {
                return Err(corrupt("checksum mismatch".into()));
            }
            let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            arrays.push(NamedArray { name, shape, data: values });
        }
        Ok(Self { meta, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path)?;
        Self::from_bytes(&buf)
    }
}
