//! The finite value set parameters are restricted to, the snapping of
//! continuous weights onto it, and its bit-packed storage form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Location, Result};

/// Sorted set of distinct finite values a parameter may take.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteSet {
    values: Vec<f64>,
    #[serde(skip)]
    midpoints: Vec<f64>,
    bits_per_code: u32,
}

impl DiscreteSet {
    /// Builds the set from values in any order. Duplicates, non-finite
    /// values and sets with fewer than two members are rejected.
    pub fn new(values: impl Into<Vec<f64>>) -> Result<Self> {
        let mut values = values.into();
        if values.is_empty() {
            return Err(Error::invalid("discrete set is empty"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("discrete set contains non-finite value {v}")));
        }
        values.sort_by(f64::total_cmp);
        // -0.0 and 0.0 compare equal and count as a duplicate.
        if let Some(w) = values.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("discrete set contains duplicate value {}", w[0])));
        }
        if values.len() < 2 {
            return Err(Error::invalid("discrete set needs at least two values"));
        }
        if values.len() > u32::MAX as usize {
            return Err(Error::invalid("discrete set too large"));
        }
        let midpoints = values.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let bits_per_code = bits_for(values.len());
        Ok(Self {
            values,
            midpoints,
            bits_per_code,
        })
    }

    /// `{-1, 0, +1}`.
    pub fn ternary() -> Self {
        Self::new(vec![-1.0, 0.0, 1.0]).expect("ternary set is valid")
    }

    /// `{0, 1}`.
    pub fn binary() -> Self {
        Self::new(vec![0.0, 1.0]).expect("binary set is valid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `ceil(log2(len))`.
    pub fn bits_per_code(&self) -> u32 {
        self.bits_per_code
    }

    /// Position of `value` in the set, if it is an exact member.
    pub fn code_of(&self, value: f64) -> Option<usize> {
        self.values
            .binary_search_by(|probe| probe.total_cmp(&value))
            .ok()
            .or_else(|| {
                // total_cmp separates -0.0 from 0.0; members compare with ==.
                if value == 0.0 {
                    self.values.iter().position(|&v| v == 0.0)
                } else {
                    None
                }
            })
    }

    pub fn contains(&self, value: f64) -> bool {
        self.code_of(value).is_some()
    }

    /// Snaps one value: the first member whose upper midpoint is not below
    /// `w`, or the largest member.
    pub fn snap(&self, w: f64) -> f64 {
        let j = self.midpoints.partition_point(|&m| m < w);
        self.values[j]
    }
}

impl<'de> Deserialize<'de> for DiscreteSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            values: Vec<f64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        DiscreteSet::new(raw.values).map_err(serde::de::Error::custom)
    }
}

fn bits_for(count: usize) -> u32 {
    debug_assert!(count >= 2);
    usize::BITS - (count - 1).leading_zeros()
}

/// Maps every pretrained weight to a member of `omega`.
///
/// Weight `w` becomes `omega[j]` for the smallest `j` with
/// `w <= (omega[j] + omega[j + 1]) / 2`, and the largest member when no such
/// `j` exists. Equivalently: the nearest member, with exact midpoints going
/// to the smaller neighbour. For `{-1, 0, 1}` this sends `(-inf, -0.5]` to
/// -1, `(-0.5, 0.5]` to 0 and `(0.5, inf)` to 1.
///
/// ```
/// use conntra::domain::{discretize, DiscreteSet};
///
/// let omega = DiscreteSet::ternary();
/// let w = discretize(&[0.7, 0.5, -0.5, -1.0], &omega).unwrap();
/// assert_eq!(w, vec![1.0, 0.0, -1.0, -1.0]);
/// ```
pub fn discretize(w_pre: &[f64], omega: &DiscreteSet) -> Result<Vec<f64>> {
    w_pre
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            if w.is_finite() {
                Ok(omega.snap(w))
            } else {
                Err(Error::Domain(format!("weight {i} is not finite ({w})")))
            }
        })
        .collect()
}

/// Discrete weights stored as `bits_per_code`-bit indices into their set.
///
/// Code `i` occupies bits `i * b .. (i + 1) * b` of the buffer, where bit `k`
/// is bit `k % 8` (least significant first) of byte `k / 8`. When `b`
/// divides 64 a code never crosses a 64-bit word boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedCodes {
    domain: DiscreteSet,
    len: usize,
    bytes: Vec<u8>,
}

/// Magic prefix of the packed-codes file format.
pub const PACKED_MAGIC: &[u8; 8] = b"CNTRAPK1";

impl PackedCodes {
    /// Packs values that are already exact members of `omega`.
    pub fn pack(values: &[f64], omega: &DiscreteSet) -> Result<Self> {
        let codes = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                omega.code_of(v).ok_or_else(|| {
                    Error::Domain(format!("value {v} at position {i} is not a member of the discrete set"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_codes(&codes, omega.clone()))
    }

    fn from_codes(codes: &[usize], domain: DiscreteSet) -> Self {
        let bits = domain.bits_per_code() as usize;
        let mut bytes = vec![0u8; byte_len(codes.len(), bits)];
        for (i, &code) in codes.iter().enumerate() {
            write_bits(&mut bytes, i * bits, bits, code as u64);
        }
        Self {
            domain,
            len: codes.len(),
            bytes,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn domain(&self) -> &DiscreteSet {
        &self.domain
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Stored bits, before rounding up to whole bytes.
    pub fn logical_bits(&self) -> u64 {
        self.len as u64 * u64::from(self.domain.bits_per_code())
    }

    pub fn code(&self, index: usize) -> Result<usize> {
        if index >= self.len {
            return Err(Error::invalid(format!("code index {index} out of range for {} codes", self.len)));
        }
        let bits = self.domain.bits_per_code() as usize;
        let code = read_bits(&self.bytes, index * bits, bits) as usize;
        if code >= self.domain.len() {
            let byte = (index * bits / 8) as u64;
            return Err(Error::format(
                Location::Byte(byte),
                format!("code {code} at position {index} exceeds set size {}", self.domain.len()),
            ));
        }
        Ok(code)
    }

    pub fn unpack(&self) -> Result<Vec<f64>> {
        (0..self.len)
            .map(|i| self.code(i).map(|c| self.domain.values()[c]))
            .collect()
    }

    /// Writes the `CNTRAPK1` file layout: magic, `u32` set size, the set as
    /// `f64`s, `u64` code count, then the bit buffer. All little-endian.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(PACKED_MAGIC)?;
        out.write_all(&(self.domain.len() as u32).to_le_bytes())?;
        for v in self.domain.values() {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&(self.len as u64).to_le_bytes())?;
        out.write_all(&self.bytes)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(20 + 8 * self.domain.len() + self.bytes.len());
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Reads the `CNTRAPK1` layout, validating every code.
    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut reader = ByteReader::new(&mut input);
        let magic = reader.array::<8>()?;
        if &magic != PACKED_MAGIC {
            return Err(Error::format(Location::Byte(0), "bad magic, expected CNTRAPK1"));
        }
        let count = u32::from_le_bytes(reader.array()?) as usize;
        let at = reader.offset;
        let mut values = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            values.push(f64::from_le_bytes(reader.array()?));
        }
        let domain = DiscreteSet::new(values.clone())
            .map_err(|e| Error::format(Location::Byte(at), e.to_string()))?;
        if domain.values() != values.as_slice() {
            return Err(Error::format(Location::Byte(at), "discrete set is not stored in ascending order"));
        }
        let len = u64::from_le_bytes(reader.array()?);
        let len = usize::try_from(len)
            .map_err(|_| Error::format(Location::Byte(reader.offset - 8), "code count too large"))?;
        let bits = domain.bits_per_code() as usize;
        let n_bytes = len
            .checked_mul(bits)
            .map(|b| b.div_ceil(8))
            .ok_or_else(|| Error::format(Location::Byte(reader.offset - 8), "code count too large"))?;
        let bytes = reader.vec(n_bytes)?;
        let end = reader.offset;
        let mut trailing = [0u8; 1];
        if input.read(&mut trailing)? != 0 {
            return Err(Error::format(Location::Byte(end), "trailing bytes after bit buffer"));
        }
        let packed = Self { domain, len, bytes };
        for i in 0..len {
            packed.code(i)?;
        }
        Ok(packed)
    }
}

fn byte_len(len: usize, bits: usize) -> usize {
    (len * bits).div_ceil(8)
}

fn write_bits(bytes: &mut [u8], start: usize, width: usize, value: u64) {
    for k in 0..width {
        let bit = start + k;
        if (value >> k) & 1 == 1 {
            bytes[bit / 8] |= 1 << (bit % 8);
        }
    }
}

fn read_bits(bytes: &[u8], start: usize, width: usize) -> u64 {
    let mut value = 0u64;
    for k in 0..width {
        let bit = start + k;
        value |= u64::from((bytes[bit / 8] >> (bit % 8)) & 1) << k;
    }
    value
}

/// Reads fixed-size chunks while tracking the byte offset for error reports.
pub(crate) struct ByteReader<'a, R: Read> {
    inner: &'a mut R,
    pub(crate) offset: u64,
}

impl<'a, R: Read> ByteReader<'a, R> {
    pub(crate) fn new(inner: &'a mut R) -> Self {
        Self { inner, offset: 0 }
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.fill(&mut buf)?;
        Ok(buf)
    }

    pub(crate) fn vec(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.fill(&mut buf)?;
        Ok(buf)
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        let mut done = 0;
        while done < buf.len() {
            match self.inner.read(&mut buf[done..]) {
                Ok(0) => {
                    return Err(Error::format(
                        Location::Byte(self.offset + done as u64),
                        format!("unexpected end of file, needed {} more bytes", buf.len() - done),
                    ))
                }
                Ok(n) => done += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }
}

/// Storage cost of a parameter vector. Kilobytes use 1 KB = 1000 bytes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryAccount {
    pub param_count: u64,
    pub bits_per_param: u32,
    pub kilobytes: f64,
}

impl MemoryAccount {
    pub fn new(param_count: u64, bits_per_param: u32) -> Result<Self> {
        if param_count == 0 || bits_per_param == 0 {
            return Err(Error::invalid(format!(
                "memory account needs positive counts, got {param_count} params x {bits_per_param} bits"
            )));
        }
        let bits = param_count as u128 * u128::from(bits_per_param);
        Ok(Self {
            param_count,
            bits_per_param,
            kilobytes: bits as f64 / 8000.0,
        })
    }

    /// Kilobytes rounded to two decimals, as printed in reports.
    pub fn kilobytes_rounded(&self) -> f64 {
        (self.kilobytes * 100.0).round() / 100.0
    }
}

/// The same parameter count stored as 64-bit floats and as packed codes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryComparison {
    pub float64: MemoryAccount,
    pub packed: MemoryAccount,
    /// `float64.kilobytes / packed.kilobytes`.
    pub ratio: f64,
}

impl MemoryComparison {
    pub fn new(param_count: u64, omega: &DiscreteSet) -> Result<Self> {
        let float64 = MemoryAccount::new(param_count, 64)?;
        let packed = MemoryAccount::new(param_count, omega.bits_per_code())?;
        Ok(Self {
            float64,
            packed,
            ratio: 64.0 / f64::from(omega.bits_per_code()),
        })
    }
}

/// Shorthand for [`MemoryAccount::new`].
pub fn memory_account(param_count: u64, bits_per_param: u32) -> Result<MemoryAccount> {
    MemoryAccount::new(param_count, bits_per_param)
}
