//! Binary field dumps.
//!
//! Layout: a 32-byte header (`b"P2FIELD1"`, then little-endian `u64` JSON
//! length, `n_t`, `n_x`), the [`LatticeSpec`] as JSON, then the fields as
//! little-endian `f64`, row-major with time outer, one field after another.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::lattice::{Field, LatticeData, LatticeSpec};

pub const MAGIC: &[u8; 8] = b"P2FIELD1";

pub fn write_fields(mut w: impl Write, spec: &LatticeSpec, fields: &[Field]) -> Result<()> {
    let json = serde_json::to_vec(spec)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&(spec.nt as u64).to_le_bytes())?;
    w.write_all(&(spec.nx as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for f in fields {
        if f.spec() != spec {
            return Err(Error::SpecMismatch);
        }
        for v in f.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_fields(mut r: impl Read) -> Result<(LatticeSpec, Vec<Field>)> {
    let mut header = [0u8; 32];
    r.read_exact(&mut header)?;
    if &header[..8] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let word = |i: usize| u64::from_le_bytes(header[8 * i..8 * i + 8].try_into().expect("8 bytes"));
    let (json_len, nt, nx) = (word(1), word(2), word(3));
    if json_len > 1 << 20 {
        return Err(Error::Format(format!("implausible header length {json_len}")));
    }
    let mut json = vec![0u8; json_len as usize];
    r.read_exact(&mut json)?;
    let spec: LatticeSpec = serde_json::from_slice(&json)?;
    spec.validate()?;
    if spec.nt as u64 != nt || spec.nx as u64 != nx {
        return Err(Error::Format("header shape disagrees with spec".into()));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    let bytes_per_field = spec.sites() * 8;
    if rest.len() % bytes_per_field != 0 {
        return Err(Error::Format(format!(
            "payload of {} bytes is not a whole number of {bytes_per_field}-byte fields",
            rest.len()
        )));
    }
    let fields = rest
        .chunks_exact(bytes_per_field)
        .map(|chunk| {
            let data = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            Field::new(spec, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((spec, fields))
}
