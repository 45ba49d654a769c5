//! Binary container shared by every on-disk artifact.
//!
//! Layout: one line of compact JSON (the header, terminated by `\n`), then
//! zero or more named tensors until end of file. Each tensor is
//!
//! ```text
//! u32 LE   name length in bytes
//! [u8]     UTF-8 name
//! u32 LE   rank
//! u64 LE   dims, `rank` of them
//! f32 LE   payload, product(dims) values, row-major
//! ```

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A plain named array, detached from any graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        NamedArray {
            name: name.into(),
            shape,
            data,
        }
    }
}

pub fn encode<H: Serialize>(header: &H, tensors: &[NamedArray]) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec(header)?;
    if out.contains(&b'\n') {
        return Err(Error::Format("header serialized with a newline".into()));
    }
    out.push(b'\n');
    for t in tensors {
        let numel: usize = t.shape.iter().product();
        if numel != t.data.len() {
            return Err(Error::Format(format!(
                "tensor `{}` has shape {:?} but {} values",
                t.name,
                t.shape,
                t.data.len()
            )));
        }
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.reserve(4 * t.data.len());
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode<H: DeserializeOwned>(bytes: &[u8]) -> Result<(H, Vec<NamedArray>)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing header line".into()))?;
    let header: H = serde_json::from_slice(&bytes[..nl])?;
    let mut r = Reader { buf: bytes, pos: nl + 1 };
    let mut tensors = Vec::new();
    while r.pos < bytes.len() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| Error::Format(format!("tensor name: {e}")))?
            .to_owned();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let payload = r.take(numel * 4)?;
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.push(NamedArray { name, shape, data });
    }
    Ok((header, tensors))
}

pub fn write_file<H: Serialize>(path: &Path, header: &H, tensors: &[NamedArray]) -> Result<Vec<u8>> {
    let bytes = encode(header, tensors)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}

pub fn read_file<H: DeserializeOwned>(path: &Path) -> Result<(H, Vec<NamedArray>, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (h, t) = decode(&bytes)?;
    Ok((h, t, bytes))
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Removes and returns the tensor called `name`.
pub fn take_named(tensors: &mut Vec<NamedArray>, name: &str) -> Result<NamedArray> {
    let idx = tensors
        .iter()
        .position(|t| t.name == name)
        .ok_or_else(|| Error::Format(format!("missing tensor `{name}`")))?;
    Ok(tensors.swap_remove(idx))
}
