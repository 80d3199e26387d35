//! PARAMS64: named `f64` parameter matrices of a trained model.
//!
//! Layout: magic `PARAMS64`, a `u32` entry count, then per entry a `u32` name
//! length, the UTF-8 name, `u32` rows, `u32` cols and the row-major `f64`
//! payload, all little-endian.

use std::fs;
use std::path::Path;

use lowrank_adapt::harness::Model;
use lowrank_adapt::numkit::Mat;
use lowrank_adapt::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PARAMS64";

pub fn encode_params(names: &[String], mats: &[&Mat<f64>]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&(names.len() as u32).to_le_bytes());
    for (name, m) in names.iter().zip(mats) {
        b.extend_from_slice(&(name.len() as u32).to_le_bytes());
        b.extend_from_slice(name.as_bytes());
        b.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        b.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.as_slice() {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    b
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Consistency {
                expected: format!("{n} more bytes at offset {}", self.at),
                actual: format!("{} bytes in file", self.bytes.len()),
            })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<Vec<(String, Mat<f64>)>> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::Format("missing PARAMS64 magic".into()));
    }
    let mut r = Reader { bytes, at: 8 };
    let count = r.u32()?;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u32()?;
        let name =
            String::from_utf8(r.take(len)?.to_vec()).map_err(|e| Error::Format(e.to_string()))?;
        let (rows, cols) = (r.u32()?, r.u32()?);
        let payload = r.take(rows.saturating_mul(cols).saturating_mul(8))?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.push((name, Mat::new(rows, cols, data)?));
    }
    if r.at != bytes.len() {
        return Err(Error::Consistency {
            expected: format!("{} bytes", r.at),
            actual: format!("{} bytes", bytes.len()),
        });
    }
    Ok(out)
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    fs::write(path, encode_params(&model.param_names(), &model.params()))?;
    Ok(())
}

/// Overwrites the parameters of a freshly initialized `model` with the saved ones.
/// Names and shapes must match entry by entry.
pub fn load_into(path: &Path, model: &mut Model) -> Result<()> {
    let saved = decode_params(&fs::read(path)?)?;
    let names = model.param_names();
    if saved.len() != names.len() {
        return Err(Error::Consistency {
            expected: format!("{} parameters", names.len()),
            actual: format!("{} parameters", saved.len()),
        });
    }
    for ((name, dst), (saved_name, m)) in names.iter().zip(model.params_mut()).zip(saved) {
        if *name != saved_name || dst.shape() != m.shape() {
            return Err(Error::Consistency {
                expected: format!("{name} {:?}", dst.shape()),
                actual: format!("{saved_name} {:?}", m.shape()),
            });
        }
        *dst = m;
    }
    Ok(())
}
