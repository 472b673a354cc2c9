//! Binary columnar particle snapshots.
//!
//! A snapshot is a little-endian block:
//!
//! ```text
//! magic "SGSNAP01" | u32 scalar width | u32 frame | u64 count
//! u64 id[count] | u16 material[count]
//! x0[count] x1[count] x2[count] v0[count] v1[count] v2[count]   (scalar width each)
//! ```
//!
//! A snapshot stream is a sequence of blocks, each prefixed by its byte length
//! as a `u64`.

use crate::error::{Result, SimError};
use crate::math::Vec3;
use crate::scalar::Real;

pub const MAGIC: &[u8; 8] = b"SGSNAP01";

/// Material id written for cloth vertices.
pub const CLOTH_MATERIAL: u16 = u16::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub frame: u32,
    pub id: Vec<u64>,
    pub material: Vec<u16>,
    pub x: Vec<[f64; 3]>,
    pub v: Vec<[f64; 3]>,
}

pub fn encode<T: Real>(frame: u32, material: &[u16], x: &[Vec3<T>], v: &[Vec3<T>]) -> Vec<u8> {
    let n = x.len();
    let mut out = Vec::with_capacity(24 + n * (10 + 6 * T::WIDTH));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(T::WIDTH as u32).to_le_bytes());
    out.extend_from_slice(&frame.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for i in 0..n as u64 {
        out.extend_from_slice(&i.to_le_bytes());
    }
    for &m in material {
        out.extend_from_slice(&m.to_le_bytes());
    }
    for field in [x, v] {
        for a in 0..3 {
            for p in field {
                p[a].write_le(&mut out);
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| SimError::InvalidConfig("truncated snapshot".into()))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn real(&mut self, width: u32) -> Result<f64> {
        Ok(match width {
            4 => f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64,
            _ => f64::from_le_bytes(self.take(8)?.try_into().unwrap()),
        })
    }
}

pub fn decode(buf: &[u8]) -> Result<Snapshot> {
    let mut r = Reader { buf, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(SimError::InvalidConfig("not a particle snapshot".into()));
    }
    let width = r.u32()?;
    if width != 4 && width != 8 {
        return Err(SimError::InvalidConfig(format!("unsupported scalar width {width}")));
    }
    let frame = r.u32()?;
    let n = r.u64()? as usize;
    let id = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let material = (0..n).map(|_| r.u16()).collect::<Result<Vec<_>>>()?;
    let mut cols = Vec::with_capacity(6);
    for _ in 0..6 {
        cols.push((0..n).map(|_| r.real(width)).collect::<Result<Vec<_>>>()?);
    }
    let x = (0..n).map(|i| [cols[0][i], cols[1][i], cols[2][i]]).collect();
    let v = (0..n).map(|i| [cols[3][i], cols[4][i], cols[5][i]]).collect();
    Ok(Snapshot { frame, id, material, x, v })
}

/// Appends a length-prefixed block to a snapshot stream.
pub fn append_block(stream: &mut Vec<u8>, block: &[u8]) {
    stream.extend_from_slice(&(block.len() as u64).to_le_bytes());
    stream.extend_from_slice(block);
}

/// Splits a snapshot stream into its blocks.
pub fn split_stream(stream: &[u8]) -> Result<Vec<&[u8]>> {
    let mut r = Reader { buf: stream, at: 0 };
    let mut out = Vec::new();
    while r.at < stream.len() {
        let len = r.u64()? as usize;
        out.push(r.take(len)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let x = vec![Vec3::new(0.1f32, 0.2, 0.3), Vec3::new(0.4, 0.5, 0.6)];
        let v = vec![Vec3::new(1.0f32, -1.0, 0.5), Vec3::zero()];
        let bytes = encode(3, &[0, 2], &x, &v);
        let s = decode(&bytes).unwrap();
        assert_eq!(s.frame, 3);
        assert_eq!(s.id, vec![0, 1]);
        assert_eq!(s.material, vec![0, 2]);
        assert_eq!(s.x[1], [0.4f32 as f64, 0.5f32 as f64, 0.6f32 as f64]);
        let mut stream = Vec::new();
        append_block(&mut stream, &bytes);
        append_block(&mut stream, &bytes);
        assert_eq!(split_stream(&stream).unwrap().len(), 2);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }
}
