//! Named-tensor weight container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "WCT2WTS\0"
//! version  u32      1
//! count    u32      number of tensors
//! count × {
//!     name_len u16, name (UTF-8),
//!     dtype    u8   (0 = f32),
//!     ndim     u8,  dims u32 × ndim,
//!     payload  f32 × prod(dims), little-endian
//! }
//! crc32    u32      IEEE CRC-32 of every byte after the magic
//! ```
//!
//! Tensors are written in lexicographic name order, so `save` is a pure
//! function of the store contents.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::Result;

pub const MAGIC: &[u8; 8] = b"WCT2WTS\0";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("not a weight container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0} (expected {VERSION})")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("container truncated while reading {0}")]
    Truncated(&'static str),
    #[error("{0} unexpected bytes after the last tensor")]
    TrailingBytes(usize),
    #[error("tensor `{0}`: unsupported dtype tag {1}")]
    UnsupportedDtype(String, u8),
    #[error("tensor name is not valid UTF-8")]
    InvalidName,
    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),
    #[error("tensor `{name}`: dims {dims:?} imply {expected} values, got {found}")]
    ElementCount {
        name: String,
        dims: Vec<usize>,
        expected: usize,
        found: usize,
    },
    #[error("tensor `{0}` cannot be encoded: {1}")]
    Unencodable(String, &'static str),
}

/// A dense f32 tensor with row-major payload.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, FormatError> {
        let expected = element_count(&dims).ok_or(FormatError::ElementCount {
            name: String::new(),
            dims: dims.clone(),
            expected: usize::MAX,
            found: data.len(),
        })?;
        if expected != data.len() {
            return Err(FormatError::ElementCount {
                name: String::new(),
                dims,
                expected,
                found: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Equality of dims and of every value's bit pattern.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.dims == other.dims
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn element_count(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// Ordered map of tensor name to tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightStore {
    tensors: BTreeMap<String, Tensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `name`.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Option<Tensor> {
        self.tensors.insert(name.into(), tensor)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.remove(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Tensors in lexicographic name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn bit_eq(&self, other: &WeightStore) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .iter()
                .zip(other.iter())
                .all(|((na, ta), (nb, tb))| na == nb && ta.bit_eq(tb))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, FormatError> {
        let mut out = Vec::with_capacity(16 + self.parameter_count() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let count = u32::try_from(self.tensors.len())
            .map_err(|_| FormatError::Unencodable(String::new(), "more than u32::MAX tensors"))?;
        out.extend_from_slice(&count.to_le_bytes());
        for (name, t) in &self.tensors {
            let name_len = u16::try_from(name.len())
                .map_err(|_| FormatError::Unencodable(name.clone(), "name longer than 65535 bytes"))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(DTYPE_F32);
            let ndim = u8::try_from(t.dims.len())
                .map_err(|_| FormatError::Unencodable(name.clone(), "more than 255 dims"))?;
            out.push(ndim);
            for &d in &t.dims {
                let d = u32::try_from(d)
                    .map_err(|_| FormatError::Unencodable(name.clone(), "dimension exceeds u32"))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out[MAGIC.len()..]);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    /// Parses a whole container. Nothing is returned unless every structural
    /// check and the checksum pass.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(FormatError::BadMagic);
        }
        let mut r = Reader {
            buf: bytes,
            pos: MAGIC.len(),
        };
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let count = r.u32("tensor count")?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u16("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "name")?)
                .map_err(|_| FormatError::InvalidName)?
                .to_owned();
            let dtype = r.u8("dtype")?;
            if dtype != DTYPE_F32 {
                return Err(FormatError::UnsupportedDtype(name, dtype));
            }
            let ndim = r.u8("ndim")? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(r.u32("dims")? as usize);
            }
            let numel = element_count(&dims)
                .filter(|n| n.checked_mul(4).is_some())
                .ok_or(FormatError::Truncated("payload"))?;
            let payload = r.take(numel * 4, "payload")?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if tensors.contains_key(&name) {
                return Err(FormatError::DuplicateName(name));
            }
            tensors.insert(name, Tensor { dims, data });
        }
        let body_end = r.pos;
        let stored = r.u32("checksum")?;
        if r.pos != bytes.len() {
            return Err(FormatError::TrailingBytes(bytes.len() - r.pos));
        }
        let computed = crc32fast::hash(&bytes[MAGIC.len()..body_end]);
        if stored != computed {
            return Err(FormatError::Checksum { stored, computed });
        }
        Ok(Self { tensors })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(FormatError::Truncated(what))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, FormatError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn load(path: impl AsRef<Path>) -> Result<WeightStore> {
    let bytes = fs::read(path)?;
    Ok(WeightStore::from_bytes(&bytes)?)
}

pub fn save(store: &WeightStore, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, store.to_bytes()?)?;
    Ok(())
}
