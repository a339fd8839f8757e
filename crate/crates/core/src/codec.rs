//! Little-endian helpers shared by the binary artifact formats.
//!
//! Every artifact starts with a 4-byte magic, a `u32` version and a 32-byte
//! configuration hash, followed by the grid and input specifications.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::abstraction::InputGrid;
use crate::error::{Error, Result};
use crate::grid::PartitionGrid;
use crate::interval::IntervalBox;

pub const VERSION: u32 = 1;

pub fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], hash: &[u8; 32]) -> Result<()> {
    w.write_all(magic)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_all(hash)?;
    Ok(())
}

pub fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<[u8; 32]> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format(format!("bad magic {m:?}, expected {magic:?}")));
    }
    let v = r.read_u32::<LE>()?;
    if v != VERSION {
        return Err(Error::Format(format!("unsupported version {v}")));
    }
    let mut hash = [0u8; 32];
    r.read_exact(&mut hash)?;
    Ok(hash)
}

fn write_box<W: Write>(w: &mut W, b: &IntervalBox) -> Result<()> {
    w.write_u32::<LE>(b.dim() as u32)?;
    for i in 0..b.dim() {
        w.write_f64::<LE>(b.lo()[i])?;
        w.write_f64::<LE>(b.hi()[i])?;
    }
    Ok(())
}

fn read_box<R: Read>(r: &mut R) -> Result<IntervalBox> {
    let n = r.read_u32::<LE>()? as usize;
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for _ in 0..n {
        lo.push(r.read_f64::<LE>()?);
        hi.push(r.read_f64::<LE>()?);
    }
    IntervalBox::new(lo, hi)
}

pub fn write_grid<W: Write>(w: &mut W, g: &PartitionGrid) -> Result<()> {
    write_box(w, g.domain())?;
    for n in g.cells_per_dim() {
        w.write_u32::<LE>(*n as u32)?;
    }
    Ok(())
}

pub fn read_grid<R: Read>(r: &mut R) -> Result<PartitionGrid> {
    let domain = read_box(r)?;
    let cells = (0..domain.dim()).map(|_| r.read_u32::<LE>().map(|v| v as usize)).collect::<std::io::Result<Vec<_>>>()?;
    PartitionGrid::new(domain, cells)
}

pub fn write_inputs<W: Write>(w: &mut W, g: &InputGrid) -> Result<()> {
    write_box(w, g.domain())?;
    for n in g.values_per_dim() {
        w.write_u32::<LE>(*n as u32)?;
    }
    w.write_u32::<LE>(g.len() as u32)?;
    for p in g.points() {
        for v in p {
            w.write_f64::<LE>(*v)?;
        }
    }
    Ok(())
}

pub fn read_inputs<R: Read>(r: &mut R) -> Result<InputGrid> {
    let domain = read_box(r)?;
    let values = (0..domain.dim()).map(|_| r.read_u32::<LE>().map(|v| v as usize)).collect::<std::io::Result<Vec<_>>>()?;
    let count = r.read_u32::<LE>()? as usize;
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        points.push((0..domain.dim()).map(|_| r.read_f64::<LE>()).collect::<std::io::Result<Vec<_>>>()?);
    }
    InputGrid::from_parts(domain, values, points)
}
