//! Binary checkpoint encoding for model parameters.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SDMX"                      4-byte magic
//! version                     u32
//! record*                     one per parameter, in canonical order
//! crc32                       u32, IEEE, over everything after the version
//!                             and before this field
//! record := name_len u32, name utf-8 bytes,
//!           rank u32, extent u64 * rank,
//!           payload f64 * product(extents)
//! ```
//!
//! Records carry no count field; they run until the trailing checksum.
//! Structural hyperparameters (variant, gate fractions, season width) are
//! not stored: decoding requires a template whose named tensors define the
//! expected names and shapes, and any disagreement is an integrity error.

use alloc::format;
use alloc::vec::Vec;

use crate::model::ModelParams;
use crate::tensor::{Error, Result, Tensor};

pub const MAGIC: [u8; 4] = *b"SDMX";
pub const VERSION: u32 = 1;

fn integrity<T>(msg: impl core::fmt::Display) -> Result<T> {
    Err(Error::Integrity(format!("{msg}")))
}

/// Serializes parameters to the checkpoint byte format.
pub fn encode(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (name, tensor) in params.named_tensors() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
        for &extent in tensor.shape() {
            out.extend_from_slice(&(extent as u64).to_le_bytes());
        }
        for &value in tensor.data() {
            out.extend_from_slice(&value.to_le_bytes());
        }
    }
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&out[8..]);
    out.extend_from_slice(&hasher.finalize().to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let slice = &self.buf[self.pos..end];
                self.pos = end;
                Ok(slice)
            }
            None => integrity(format_args!("checkpoint truncated while reading {what}")),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("eight bytes")))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Decodes a checkpoint into a copy of `template`, whose variant and
/// dimensions define the expected parameter names and shapes.
pub fn decode(bytes: &[u8], template: &ModelParams) -> Result<ModelParams> {
    if bytes.len() < MAGIC.len() + 4 + 4 {
        return integrity("checkpoint shorter than its fixed framing");
    }
    if bytes[..4] != MAGIC {
        return integrity("bad magic; not a checkpoint file");
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("four bytes"));
    if version != VERSION {
        return integrity(format_args!(
            "unsupported checkpoint version {version}, expected {VERSION}"
        ));
    }
    let body_end = bytes.len() - 4;
    let stored_crc = u32::from_le_bytes(bytes[body_end..].try_into().expect("four bytes"));
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&bytes[8..body_end]);
    let actual = hasher.finalize();
    if actual != stored_crc {
        return integrity(format_args!(
            "checksum mismatch: stored {stored_crc:08x}, computed {actual:08x}"
        ));
    }

    let mut out = template.clone();
    let mut reader = Reader {
        buf: &bytes[..body_end],
        pos: 8,
    };
    for (name, slot) in out.named_tensors_mut() {
        let name_len = reader.u32("a name length")? as usize;
        let raw = reader.take(name_len, "a parameter name")?;
        let found = match core::str::from_utf8(raw) {
            Ok(s) => s,
            Err(_) => return integrity("parameter name is not valid UTF-8"),
        };
        if found != name {
            return integrity(format_args!(
                "parameter order mismatch: found {found:?}, expected {name:?}"
            ));
        }
        let rank = reader.u32("a rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut len = 1usize;
        for _ in 0..rank {
            let extent = reader.u64("an extent")?;
            let extent: usize = match extent.try_into() {
                Ok(e) => e,
                Err(_) => return integrity("extent does not fit this platform"),
            };
            len = match len.checked_mul(extent) {
                Some(l) => l,
                None => return integrity("extent product overflows"),
            };
            shape.push(extent);
        }
        if shape != slot.shape() {
            return integrity(format_args!(
                "shape mismatch for {name}: found {shape:?}, expected {:?}",
                slot.shape()
            ));
        }
        let payload = reader.take(len * 8, name)?;
        let mut data = Vec::with_capacity(len);
        for chunk in payload.chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().expect("eight bytes")));
        }
        *slot = Tensor::new(shape, data)?;
    }
    if reader.remaining() != 0 {
        return integrity(format_args!(
            "{} unexpected trailing bytes after the last parameter",
            reader.remaining()
        ));
    }
    Ok(out)
}
