//! Continuous weight files: the 8-byte magic `CNTRAWTS`, a little-endian
//! u64 count, then that many little-endian f64 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::domain::ByteReader;
use crate::error::{Error, Location, Result};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"CNTRAWTS";

pub fn write_weights<W: Write>(values: &[f64], mut out: W) -> Result<()> {
    out.write_all(WEIGHTS_MAGIC)?;
    out.write_all(&(values.len() as u64).to_le_bytes())?;
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_weights<R: Read>(mut input: R) -> Result<Vec<f64>> {
    let mut reader = ByteReader::new(&mut input);
    if &reader.array::<8>()? != WEIGHTS_MAGIC {
        return Err(Error::format(Location::Byte(0), "bad magic, expected CNTRAWTS"));
    }
    let len = u64::from_le_bytes(reader.array()?);
    let len = usize::try_from(len)
        .ok()
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or_else(|| Error::format(Location::Byte(8), format!("weight count {len} too large")))?;
    let mut values = Vec::with_capacity(len.min(1 << 20));
    for _ in 0..len {
        values.push(f64::from_le_bytes(reader.array()?));
    }
    let end = reader.offset;
    let mut probe = [0u8; 1];
    if input.read(&mut probe)? != 0 {
        return Err(Error::format(Location::Byte(end), "trailing bytes after weights"));
    }
    Ok(values)
}

pub fn save_weights(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    write_weights(values, BufWriter::new(File::create(path)?))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    read_weights(BufReader::new(File::open(path)?))
}
