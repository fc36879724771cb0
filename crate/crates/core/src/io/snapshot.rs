//! Binary snapshots: a fixed little-endian header followed by the nodal
//! values, row-major over nodes with the components of each node adjacent.
//!
//! ```text
//! magic "HLLG" | version u32 | n u32 | m u32 | dims [u32; 3] | lengths [f64; 3]
//! | t f64 | payload_len u64 | payload
//! ```
//! Unused axes have `dims = 1` and `lengths = 0`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::SphereField;
use crate::spectral::{RealField, SpectralGrid};

pub const MAGIC: &[u8; 4] = b"HLLG";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 12 + 24 + 8 + 8;

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotHeader {
    pub version: u32,
    pub n: u32,
    pub m: u32,
    pub dims: [u32; 3],
    pub lengths: [f64; 3],
    pub t: f64,
    pub payload_len: u64,
}

/// Encode `u` at time `t`.
pub fn encode_snapshot(u: &SphereField, t: f64) -> Vec<u8> {
    let grid = u.grid();
    let values = u.values();
    let c = values.ncomp();
    let mut dims = [1u32; 3];
    let mut lengths = [0.0f64; 3];
    for a in 0..grid.ndim() {
        dims[a] = grid.dims()[a] as u32;
        lengths[a] = grid.lengths()[a];
    }
    let payload_len = (c * grid.len() * 8) as u64;
    let mut out = Vec::with_capacity(HEADER_LEN + payload_len as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.ndim() as u32).to_le_bytes());
    out.extend_from_slice(&((c - 1) as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for l in lengths {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&t.to_le_bytes());
    out.extend_from_slice(&payload_len.to_le_bytes());
    for i in 0..grid.len() {
        for k in 0..c {
            out.extend_from_slice(&values.component(k)[i].to_le_bytes());
        }
    }
    out
}

pub fn write_snapshot(u: &SphereField, t: f64, path: &Path) -> Result<()> {
    fs::write(path, encode_snapshot(u, t)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format("truncated snapshot header".into()))?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn decode_header(bytes: &[u8]) -> Result<SnapshotHeader> {
    let mut r = Reader { bytes, pos: 0 };
    if &r.take::<4>()? != MAGIC {
        return Err(Error::Format("bad magic bytes (not an HLLG snapshot)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported snapshot version {version} (expected {VERSION})"
        )));
    }
    let n = r.u32()?;
    let m = r.u32()?;
    let dims = [r.u32()?, r.u32()?, r.u32()?];
    let lengths = [r.f64()?, r.f64()?, r.f64()?];
    let t = r.f64()?;
    let payload_len = r.u64()?;
    if !(1..=3).contains(&n) || m == 0 {
        return Err(Error::Format(format!("invalid header: n = {n}, m = {m}")));
    }
    let nodes: u64 = dims[..n as usize].iter().map(|&d| d as u64).product();
    if payload_len != (m as u64 + 1) * nodes * 8 {
        return Err(Error::Format(format!(
            "payload length {payload_len} does not match the header shape"
        )));
    }
    Ok(SnapshotHeader {
        version,
        n,
        m,
        dims,
        lengths,
        t,
        payload_len,
    })
}

/// Decode a snapshot. The base point, which the format does not store, is
/// the normalized spatial mean of the values (the last basis vector if the
/// mean vanishes).
pub fn decode_snapshot(bytes: &[u8]) -> Result<(SphereField, f64)> {
    let h = decode_header(bytes)?;
    let body = &bytes[HEADER_LEN..];
    if body.len() as u64 != h.payload_len {
        return Err(Error::Format(format!(
            "payload has {} bytes, header announces {}",
            body.len(),
            h.payload_len
        )));
    }
    let n = h.n as usize;
    let dims: Vec<usize> = h.dims[..n].iter().map(|&d| d as usize).collect();
    let grid = SpectralGrid::new(&dims, &h.lengths[..n])
        .map_err(|e| Error::Format(format!("invalid grid in header: {e}")))?;
    let c = h.m as usize + 1;
    let mut comps = vec![vec![0.0; grid.len()]; c];
    for (j, chunk) in body.chunks_exact(8).enumerate() {
        comps[j % c][j / c] = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
    }
    let values = RealField::new(grid, comps)?;
    let mut base: Vec<f64> = values
        .components()
        .iter()
        .map(|comp| comp.iter().sum::<f64>() / comp.len() as f64)
        .collect();
    let r = base.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r > 0.0 && r.is_finite() {
        base.iter_mut().for_each(|v| *v /= r);
    } else {
        base = vec![0.0; c];
        base[c - 1] = 1.0;
    }
    Ok((SphereField::from_parts_unchecked(values, base), h.t))
}

pub fn read_snapshot(path: &Path) -> Result<(SphereField, f64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes)
}
