//! Binary dataset cache, all integers and floats little-endian:
//!
//! ```text
//! magic   8 bytes  "PSLDATA\0"
//! version u32      1
//! n, f, l u64 x 3  examples, features, labels
//! per example:
//!   u32 label count, u32 feature count,
//!   u32 label indices, then (u32 index, f64 value) pairs
//! ```

use std::io::{Read, Write};

use super::{Example, SparseDataset};
use crate::error::{Error, Result};
use crate::labels::SparseLabels;

const MAGIC: &[u8; 8] = b"PSLDATA\0";
const VERSION: u32 = 1;

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Validation(format!("{v} does not fit the cache format")))
}

pub fn write_cache<W: Write>(ds: &SparseDataset, mut w: W) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [ds.num_examples(), ds.num_features(), ds.num_labels()] {
        buf.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    for e in ds.examples() {
        buf.extend_from_slice(&u32_of(e.labels.len())?.to_le_bytes());
        buf.extend_from_slice(&u32_of(e.features.len())?.to_le_bytes());
        for i in e.labels.iter() {
            buf.extend_from_slice(&u32_of(i)?.to_le_bytes());
        }
        for &(f, v) in &e.features {
            buf.extend_from_slice(&u32_of(f)?.to_le_bytes());
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let bytes = self
            .data
            .get(self.pos..end)
            .ok_or_else(|| Error::Validation(format!("cache truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice of length N"))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take()?) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        usize::try_from(u64::from_le_bytes(self.take()?)).map_err(|_| Error::Validation("dimension too large".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn read_cache<R: Read>(mut r: R) -> Result<SparseDataset> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let mut c = Cursor { data: &data, pos: 0 };
    if &c.take::<8>()? != MAGIC {
        return Err(Error::Validation("not a dataset cache (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != VERSION as usize {
        return Err(Error::Validation(format!("unsupported cache version {version}")));
    }
    let (n, num_features, num_labels) = (c.u64()?, c.u64()?, c.u64()?);
    let mut examples = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let (nl, nf) = (c.u32()?, c.u32()?);
        let labels = (0..nl).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        let features = (0..nf).map(|_| Ok((c.u32()?, c.f64()?))).collect::<Result<Vec<_>>>()?;
        examples.push(Example { features, labels: SparseLabels::new(labels, num_labels)? });
    }
    if c.pos != data.len() {
        return Err(Error::Validation("trailing bytes after cache".into()));
    }
    SparseDataset::new(num_features, num_labels, examples)
}
