//! Little-endian helpers shared by the binary file formats.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_f64<W: Write>(w: &mut W, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_f64s<W: Write>(w: &mut W, vs: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(vs.len() * 8);
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &'static str, field: impl Into<String>) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::parse(what, field, format!("truncated or unreadable ({e})")))
}

pub fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 4], what: &'static str) -> Result<()> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what, "magic")?;
    if &buf != magic {
        return Err(Error::parse(
            what,
            "magic",
            format!(
                "expected {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&buf)
            ),
        ));
    }
    Ok(())
}

pub fn read_u8<R: Read>(r: &mut R, what: &'static str, field: impl Into<String>) -> Result<u8> {
    let mut buf = [0u8; 1];
    read_exact(r, &mut buf, what, field)?;
    Ok(buf[0])
}

pub fn read_u32<R: Read>(r: &mut R, what: &'static str, field: impl Into<String>) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what, field)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_f64<R: Read>(r: &mut R, what: &'static str, field: impl Into<String>) -> Result<f64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, what, field)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn read_f64s<R: Read>(r: &mut R, n: usize, what: &'static str, field: impl Into<String>) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    read_exact(r, &mut buf, what, field)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}
