//! Flat little-endian binary container shared by model checkpoints and
//! binary datasets.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "FCMI"
//! 4       4           version (u32) = 1
//! 8       4           kind (u32): 0 = model checkpoint, 1 = dataset
//! 12      4           dim count m (u32)
//! 16      8·m         dims (u64): layer dims for a model, [N, D] for a dataset
//! ..      8           group count T (u64)
//! ..      8           float count f (u64)
//! ..      8·f         f64 payload
//! ..      8           integer count i (u64)
//! ..      8·i         u64 payload
//! ```
//!
//! A model's float payload is every weight matrix (row-major) and bias in
//! declaration order: encoder layers, then decoder branch 0, 1, …; its
//! integer payload is empty. A dataset stores its `N×D` features as floats
//! and its group ids followed by (if present) its labels as integers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FCMI";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    Model = 0,
    Dataset = 1,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub kind: ContainerKind,
    pub dims: Vec<u64>,
    pub groups: u64,
}

pub fn encode(header: &Header, floats: &[f64], ints: &[u64]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(48 + 8 * (header.dims.len() + floats.len() + ints.len()));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.kind as u32).to_le_bytes());
    buf.extend_from_slice(&(header.dims.len() as u32).to_le_bytes());
    for d in &header.dims {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    buf.extend_from_slice(&header.groups.to_le_bytes());
    buf.extend_from_slice(&(floats.len() as u64).to_le_bytes());
    for v in floats {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(ints.len() as u64).to_le_bytes());
    for v in ints {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn count(&mut self) -> std::result::Result<usize, String> {
        let n = self.u64()?;
        let remaining = (self.bytes.len() - self.pos) as u64;
        if n > remaining / 8 {
            return Err(format!("count {n} exceeds remaining {remaining} bytes"));
        }
        Ok(n as usize)
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<(Header, Vec<f64>, Vec<u64>), String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let kind = match c.u32()? {
        0 => ContainerKind::Model,
        1 => ContainerKind::Dataset,
        k => return Err(format!("unknown container kind {k}")),
    };
    let dim_count = c.u32()? as usize;
    let dims = (0..dim_count).map(|_| c.u64()).collect::<std::result::Result<_, _>>()?;
    let groups = c.u64()?;
    let nf = c.count()?;
    let floats = (0..nf)
        .map(|_| c.u64().map(f64::from_bits))
        .collect::<std::result::Result<_, _>>()?;
    let ni = c.count()?;
    let ints = (0..ni).map(|_| c.u64()).collect::<std::result::Result<_, _>>()?;
    if c.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    Ok((Header { kind, dims, groups }, floats, ints))
}

pub fn write(path: &Path, header: &Header, floats: &[f64], ints: &[u64]) -> Result<()> {
    fs::write(path, encode(header, floats, ints)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path, expect: ContainerKind) -> Result<(Header, Vec<f64>, Vec<u64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, floats, ints) = decode(&bytes).map_err(|m| Error::format(path, m))?;
    if header.kind != expect {
        return Err(Error::format(
            path,
            format!("expected a {expect:?} container, found {:?}", header.kind),
        ));
    }
    Ok((header, floats, ints))
}
