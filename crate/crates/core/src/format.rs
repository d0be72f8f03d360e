//! Binary tensor files.
//!
//! `TNSR1` (dense): magic `TNSR1`, `N: u32 LE`, `d: u32 LE`, then `d^N`
//! `f64 LE` values in row-major order with the last index fastest.
//!
//! `TCPD1` (CP): magic `TCPD1`, `N`, `d`, `R` (each `u32 LE`), `R` weights
//! (`f64 LE`), then for each mode `n = 1..N` the `R` factor vectors
//! `u_1^(n), ..., u_R^(n)`, each `d` values `f64 LE`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{checked_pow, CpTensor, DenseTensor};

pub const DENSE_MAGIC: &[u8; 5] = b"TNSR1";
pub const CP_MAGIC: &[u8; 5] = b"TCPD1";

/// A tensor file of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorFile {
    Dense(DenseTensor),
    Cp(CpTensor),
}

pub fn encode_dense(tensor: &DenseTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + 8 * tensor.data().len());
    out.extend_from_slice(DENSE_MAGIC);
    out.extend_from_slice(&(tensor.order() as u32).to_le_bytes());
    out.extend_from_slice(&(tensor.dim() as u32).to_le_bytes());
    for x in tensor.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn encode_cp(tensor: &CpTensor) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CP_MAGIC);
    for v in [tensor.order(), tensor.dim(), tensor.rank()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for w in tensor.weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    for n in 0..tensor.order() {
        for r in 0..tensor.rank() {
            for x in tensor.factor(n, r) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!(
                "truncated file: expected {n} more bytes for {what} at offset {}, {} available",
                self.pos,
                self.bytes.len() - self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Format(format!("{what}: size overflow")))?;
        let b = self.take(len, what)?;
        Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after tensor payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn decode(bytes: &[u8]) -> Result<TensorFile> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(5, "magic").map_err(|_| Error::Format("file too short for magic".into()))?;
    match magic {
        m if m == DENSE_MAGIC => {
            let order = r.u32("order")?;
            let dim = r.u32("dimension")?;
            let len = checked_pow(dim, order)
                .ok_or_else(|| Error::Format(format!("d^N overflows for N={order}, d={dim}")))?;
            let data = r.f64s(len, "tensor entries")?;
            r.finish()?;
            DenseTensor::new(order, dim, data).map(TensorFile::Dense)
        }
        m if m == CP_MAGIC => {
            let order = r.u32("order")?;
            let dim = r.u32("dimension")?;
            let rank = r.u32("rank")?;
            let weights = r.f64s(rank, "weights")?;
            let mut factors = Vec::with_capacity(order);
            for _ in 0..order {
                let mut mode = Vec::with_capacity(rank);
                for _ in 0..rank {
                    mode.push(r.f64s(dim, "factor vector")?);
                }
                factors.push(mode);
            }
            r.finish()?;
            CpTensor::new(order, dim, weights, factors).map(TensorFile::Cp)
        }
        other => Err(Error::Format(format!(
            "bad magic {:?}, expected TNSR1 or TCPD1",
            String::from_utf8_lossy(other)
        ))),
    }
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<TensorFile> {
    decode(&fs::read(path)?)
}

/// Reads a tensor file as a dense tensor; `TCPD1` input is densified.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    match read_tensor_file(path)? {
        TensorFile::Dense(t) => Ok(t),
        TensorFile::Cp(t) => t.densify(),
    }
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &DenseTensor) -> Result<()> {
    fs::write(path, encode_dense(tensor))?;
    Ok(())
}

pub fn write_cp_tensor(path: impl AsRef<Path>, tensor: &CpTensor) -> Result<()> {
    fs::write(path, encode_cp(tensor))?;
    Ok(())
}
