//! Binary snapshot container for spectral fields.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `ERDSPEC\0` |
//! | 4     | format version (`1`) |
//! | 4     | endianness tag `0x01020304` as written by the producer |
//! | 1     | scalar width in bytes (4 or 8) |
//! | 1     | spatial dimension `d` |
//! | 2     | component count |
//! | 8·d   | grid sizes (u64) |
//! | 8·d   | box lengths (f64) |
//! | 8     | time (f64) |
//! | 4 + n | field name (u32 length, UTF-8 bytes) |
//! | 8     | mode count per component (u64) |
//! | …     | coefficients: component-major, `(re, im)` pairs in the scalar width |

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;
use crate::spectral::{SpectralField, SpectralLayout};

pub const MAGIC: &[u8; 8] = b"ERDSPEC\0";
pub const VERSION: u32 = 1;
const ENDIAN_TAG: u32 = 0x0102_0304;

/// A named field at a given time.
#[derive(Clone, Debug)]
pub struct Snapshot<T: Real> {
    pub name: String,
    pub time: f64,
    pub field: SpectralField<T>,
}

pub fn encode<T: Real>(snap: &Snapshot<T>) -> Vec<u8> {
    let f = &snap.field;
    let g = f.grid();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&ENDIAN_TAG.to_le_bytes());
    out.push(T::TYPE_TAG);
    out.push(g.dim() as u8);
    out.extend_from_slice(&(f.ncomp() as u16).to_le_bytes());
    for &n in g.dims() {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for &l in g.box_length() {
        out.extend_from_slice(&l.as_f64().to_le_bytes());
    }
    out.extend_from_slice(&snap.time.to_le_bytes());
    out.extend_from_slice(&(snap.name.len() as u32).to_le_bytes());
    out.extend_from_slice(snap.name.as_bytes());
    out.extend_from_slice(&(f.layout().n_modes() as u64).to_le_bytes());
    for comp in f.coeffs() {
        for c in comp {
            c.re.write_le(&mut out);
            c.im.write_le(&mut out);
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!(
                "truncated container: need {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes a container; `layout` is reused when its grid matches the header.
pub fn decode<T: Real>(bytes: &[u8], layout: Option<&Arc<SpectralLayout<T>>>) -> Result<Snapshot<T>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let tag = c.u32()?;
    if tag != ENDIAN_TAG {
        return Err(Error::Format(format!("unexpected endianness tag {tag:#x}")));
    }
    let width = c.take(1)?[0];
    if width != T::TYPE_TAG {
        return Err(Error::Format(format!(
            "container holds {width}-byte scalars, reader expects {}",
            T::TYPE_TAG
        )));
    }
    let d = c.take(1)?[0] as usize;
    let ncomp = c.u16()? as usize;
    let mut dims = Vec::with_capacity(d);
    for _ in 0..d {
        dims.push(c.u64()? as usize);
    }
    let mut lens = Vec::with_capacity(d);
    for _ in 0..d {
        lens.push(T::lit(c.f64()?));
    }
    let time = c.f64()?;
    let name_len = c.u32()? as usize;
    let name = String::from_utf8(c.take(name_len)?.to_vec())
        .map_err(|e| Error::Format(format!("field name: {e}")))?;
    let n_modes = c.u64()? as usize;
    let grid = Grid::new(&dims, &lens)?;
    let layout = match layout {
        Some(l) if l.grid() == &grid => l.clone(),
        _ => SpectralLayout::new(grid),
    };
    if n_modes != layout.n_modes() {
        return Err(Error::Format(format!(
            "{n_modes} modes recorded, grid implies {}",
            layout.n_modes()
        )));
    }
    let w = T::BYTES;
    let mut coeffs = Vec::with_capacity(ncomp);
    for _ in 0..ncomp {
        let raw = c.take(2 * w * n_modes)?;
        coeffs.push(
            raw.chunks_exact(2 * w)
                .map(|p| Complex::new(T::read_le(&p[..w]), T::read_le(&p[w..])))
                .collect(),
        );
    }
    if c.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after coefficients".into()));
    }
    Ok(Snapshot {
        name,
        time,
        field: SpectralField::from_coeffs(&layout, coeffs)?,
    })
}

pub fn write_snapshot<T: Real, W: Write>(w: &mut W, snap: &Snapshot<T>) -> Result<()> {
    w.write_all(&encode(snap))?;
    Ok(())
}

pub fn read_snapshot<T: Real, R: Read>(r: &mut R) -> Result<Snapshot<T>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode(&buf, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field<T: Real>(dims: &[usize], seed: u64) -> SpectralField<T> {
        let g = Grid::new(dims, &vec![T::lit(1.7); dims.len()]).unwrap();
        let l = SpectralLayout::new(g.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let comps: Vec<Vec<T>> = (0..dims.len())
            .map(|_| (0..g.len()).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect())
            .collect();
        SpectralField::from_physical(&l, &comps).unwrap()
    }

    #[test]
    fn bit_exact_round_trip() {
        let snap = Snapshot {
            name: "w0".to_string(),
            time: 0.125,
            field: random_field::<f64>(&[8, 6, 4], 1),
        };
        let bytes = encode(&snap);
        let back = decode::<f64>(&bytes, None).unwrap();
        assert_eq!(back.name, "w0");
        assert_eq!(back.time, 0.125);
        assert_eq!(encode(&back), bytes);
        for (a, b) in back.field.coeffs().iter().flatten().zip(snap.field.coeffs().iter().flatten()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }

        let s32 = Snapshot {
            name: "u".into(),
            time: 3.0,
            field: random_field::<f32>(&[4, 8], 2),
        };
        let b32 = encode(&s32);
        assert_eq!(encode(&decode::<f32>(&b32, None).unwrap()), b32);
        assert!(matches!(decode::<f64>(&b32, None), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_corruption() {
        let snap = Snapshot {
            name: "u".into(),
            time: 0.0,
            field: random_field::<f64>(&[4, 4], 3),
        };
        let mut bytes = encode(&snap);
        assert!(decode::<f64>(&bytes[..bytes.len() - 1], None).is_err());
        bytes.push(0);
        assert!(decode::<f64>(&bytes, None).is_err());
        let mut bad = encode(&snap);
        bad[0] = b'X';
        assert!(decode::<f64>(&bad, None).is_err());
    }
}
