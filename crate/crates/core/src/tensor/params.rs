//! Named parameter sets and the binary tensor file used for checkpoints.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! magic    b"MGTF"
//! version  u32 (= 1)
//! count    u32
//! count x {
//!     name_len u32, name (UTF-8, name_len bytes)
//!     ndim     u32, dims (ndim x u64)
//!     values   product(dims) x f64
//! }
//! ```

use std::collections::HashMap;
use std::io::{Read, Write};

use super::{Tensor, TensorError};

pub const TENSOR_FILE_MAGIC: &[u8; 4] = b"MGTF";
pub const TENSOR_FILE_VERSION: u32 = 1;

/// Ordered, named collection of trainable tensors.
#[derive(Clone, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<(), TensorError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::DuplicateName(name));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, TensorError> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].1)
            .ok_or_else(|| TensorError::MissingName(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn value(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub(crate) fn replace(&mut self, i: usize, value: Tensor) {
        self.entries[i].1 = value;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Copy whose tensors carry no gradient tracking (frozen parameters).
    pub fn frozen(&self) -> ParamSet {
        let mut out = ParamSet::new();
        for (n, t) in &self.entries {
            out.insert(n.clone(), t.detach()).expect("names are unique");
        }
        out
    }

    /// Merges another set in; names must not collide.
    pub fn extend(&mut self, other: &ParamSet) -> Result<(), TensorError> {
        for (n, t) in other.iter() {
            self.insert(n, t.clone())?;
        }
        Ok(())
    }

    pub fn to_arrays(&self, prefix: &str) -> Vec<NamedArray> {
        self.entries
            .iter()
            .map(|(n, t)| NamedArray {
                name: format!("{prefix}{n}"),
                shape: t.shape().to_vec(),
                values: t.to_vec(),
            })
            .collect()
    }

    /// Rebuilds a set from the arrays whose names start with `prefix`.
    pub fn from_arrays(arrays: &[NamedArray], prefix: &str) -> Result<ParamSet, TensorError> {
        let mut out = ParamSet::new();
        for a in arrays {
            if let Some(name) = a.name.strip_prefix(prefix) {
                out.insert(name, Tensor::param(&a.shape, a.values.clone())?)?;
            }
        }
        Ok(out)
    }

    /// Replaces values from `arrays`, checking that names and shapes line up
    /// with this set exactly.
    pub fn load_matching(&self, arrays: &[NamedArray], prefix: &str) -> Result<ParamSet, TensorError> {
        let loaded = Self::from_arrays(arrays, prefix)?;
        if loaded.len() != self.len() {
            return Err(TensorError::ShapeMismatch {
                op: "load_params",
                detail: format!("expected {} tensors under '{prefix}', found {}", self.len(), loaded.len()),
            });
        }
        for (n, t) in self.iter() {
            let l = loaded.get(n)?;
            if l.shape() != t.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "load_params",
                    detail: format!("{n}: expected {:?}, file has {:?}", t.shape(), l.shape()),
                });
            }
        }
        // keep this set's ordering
        let mut out = ParamSet::new();
        for (n, _) in self.iter() {
            out.insert(n, loaded.get(n)?.clone())?;
        }
        Ok(out)
    }
}

impl std::fmt::Debug for ParamSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_map().entries(self.entries.iter().map(|(n, t)| (n, t.shape()))).finish()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn write_tensor_file(mut w: impl Write, arrays: &[NamedArray]) -> Result<(), TensorError> {
    let io = |e: std::io::Error| TensorError::Io(e.to_string());
    w.write_all(TENSOR_FILE_MAGIC).map_err(io)?;
    w.write_all(&TENSOR_FILE_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(arrays.len() as u32).to_le_bytes()).map_err(io)?;
    for a in arrays {
        let mut buf = Vec::with_capacity(16 + a.name.len() + a.values.len() * 8);
        buf.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(a.name.as_bytes());
        buf.extend_from_slice(&(a.shape.len() as u32).to_le_bytes());
        for &d in &a.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &a.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TensorError> {
        if self.bytes.len() - self.pos < n {
            return Err(TensorError::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TensorError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, TensorError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_tensor_file(mut r: impl Read) -> Result<Vec<NamedArray>, TensorError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| TensorError::Io(e.to_string()))?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4)? != TENSOR_FILE_MAGIC {
        return Err(TensorError::Format("bad magic".into()));
    }
    let version = c.u32()?;
    if version != TENSOR_FILE_VERSION {
        return Err(TensorError::Format(format!("unsupported version {version}")));
    }
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| TensorError::Format(format!("non UTF-8 name near byte {}", c.pos)))?
            .to_string();
        let ndim = c.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim.min(16));
        for _ in 0..ndim {
            shape.push(c.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = c.take(n.checked_mul(8).ok_or_else(|| TensorError::Format("size overflow".into()))?)?;
        let values = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        out.push(NamedArray { name, shape, values });
    }
    if c.pos != bytes.len() {
        return Err(TensorError::Format(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(out)
}
