//! Binary parameter segment for one MLP.
//!
//! Layout (little-endian):
//!
//! ```text
//! "DDM1"  u32 layer_count  { u32 rows, u32 cols } × layer_count
//! { f64 weights[rows*cols] (row-major), f64 biases[rows] } × layer_count
//! ```

use std::io::{Read, Write};

use super::matrix::Matrix;
use super::mlp::{LinearLayer, Mlp};
use crate::binio;
use crate::error::{Error, Result};

pub const SEGMENT_MAGIC: &[u8; 4] = b"DDM1";

pub fn write_segment<W: Write>(w: &mut W, mlp: &Mlp) -> std::io::Result<()> {
    w.write_all(SEGMENT_MAGIC)?;
    binio::write_u32(w, mlp.layers().len() as u32)?;
    for layer in mlp.layers() {
        binio::write_u32(w, layer.weights.rows() as u32)?;
        binio::write_u32(w, layer.weights.cols() as u32)?;
    }
    for layer in mlp.layers() {
        binio::write_f64s(w, layer.weights.data())?;
        binio::write_f64s(w, &layer.biases)?;
    }
    Ok(())
}

pub fn read_segment<R: Read>(r: &mut R) -> Result<Mlp> {
    const WHAT: &str = "parameter segment";
    binio::expect_magic(r, SEGMENT_MAGIC, WHAT)?;
    let count = binio::read_u32(r, WHAT, "layer count")? as usize;
    if count == 0 || count > 1024 {
        return Err(Error::parse(WHAT, "layer count", format!("implausible value {count}")));
    }
    let mut shapes = Vec::with_capacity(count);
    for i in 0..count {
        let rows = binio::read_u32(r, WHAT, format!("layer {i} rows"))? as usize;
        let cols = binio::read_u32(r, WHAT, format!("layer {i} cols"))? as usize;
        shapes.push((rows, cols));
    }
    let mut layers = Vec::with_capacity(count);
    for (i, &(rows, cols)) in shapes.iter().enumerate() {
        let w = binio::read_f64s(r, rows * cols, WHAT, format!("layer {i} weights"))?;
        let b = binio::read_f64s(r, rows, WHAT, format!("layer {i} biases"))?;
        layers.push(LinearLayer {
            weights: Matrix::from_vec(rows, cols, w)?,
            biases: b,
        });
    }
    Mlp::from_layers(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn header_layout_is_exact() {
        let mlp = Mlp::zeros(&[3, 2]).unwrap();
        let mut buf = Vec::new();
        write_segment(&mut buf, &mlp).unwrap();
        assert_eq!(&buf[..4], b"DDM1");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(&buf[12..16], &3u32.to_le_bytes());
        assert_eq!(buf.len(), 16 + 8 * (6 + 2));
    }

    #[test]
    fn round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::orthogonal(&[5, 7, 2], &mut rng).unwrap();
        let mut buf = Vec::new();
        write_segment(&mut buf, &mlp).unwrap();
        let back = read_segment(&mut buf.as_slice()).unwrap();
        assert_eq!(back, mlp);
    }

    #[test]
    fn bad_magic_and_truncation_are_named() {
        let err = read_segment(&mut &b"XXXX"[..]).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");
        let mlp = Mlp::zeros(&[3, 2]).unwrap();
        let mut buf = Vec::new();
        write_segment(&mut buf, &mlp).unwrap();
        buf.truncate(buf.len() - 3);
        let err = read_segment(&mut buf.as_slice()).unwrap_err().to_string();
        assert!(err.contains("layer 0 biases"), "{err}");
    }
}
