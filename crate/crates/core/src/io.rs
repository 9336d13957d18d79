//! Binary file helpers and the `CIMG1` complex image format.
//!
//! CIMG layout (little-endian): magic `CIMG1`, `u32` height, `u32` width,
//! `u32` coils, `u8` dtype (1 = f64), then interleaved `(re, im)` `f64`
//! pairs, coil-major then row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::ComplexImage;

const CIMG_MAGIC: &[u8; 5] = b"CIMG1";
const DTYPE_F64: u8 = 1;

/// Writes `bytes` to a temporary sibling of `path` and renames it into
/// place, so readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::Io(std::io::Error::new(
            e.kind(),
            format!("writing {}: {e}", path.display()),
        )));
    }
    Ok(())
}

/// Bounds-checked little-endian cursor.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated file at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn expect_magic(&mut self, magic: &[u8]) -> Result<()> {
        let got = self.bytes(magic.len())?;
        if got != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Format("tensor too large".into()))?;
        Ok(self
            .bytes(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn encode_cimg(img: &ComplexImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(18 + img.data().len() * 16);
    out.extend_from_slice(CIMG_MAGIC);
    for v in [img.height(), img.width(), img.coils()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(DTYPE_F64);
    for c in img.data() {
        out.extend_from_slice(&c.re.to_le_bytes());
        out.extend_from_slice(&c.im.to_le_bytes());
    }
    out
}

pub fn decode_cimg(bytes: &[u8]) -> Result<ComplexImage> {
    let mut r = Reader::new(bytes);
    r.expect_magic(CIMG_MAGIC)?;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let c = r.u32()? as usize;
    let dtype = r.u8()?;
    if dtype != DTYPE_F64 {
        return Err(Error::Format(format!("unsupported CIMG dtype {dtype}")));
    }
    let n = h
        .checked_mul(w)
        .and_then(|p| p.checked_mul(c))
        .and_then(|p| p.checked_mul(2))
        .ok_or_else(|| Error::Format("CIMG dimensions overflow".into()))?;
    let vals = r.f64s(n)?;
    r.finish()?;
    let data = vals.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    ComplexImage::from_vec(h, w, c, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_cimg(path: &Path, img: &ComplexImage) -> Result<()> {
    atomic_write(path, &encode_cimg(img))
}

pub fn load_cimg(path: &Path) -> Result<ComplexImage> {
    let bytes = read_file(path)?;
    decode_cimg(&bytes)
}

/// `fs::read` with the path in the error message.
pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cimg_header_layout() {
        let img = ComplexImage::zeros(4, 8, 2).unwrap();
        let b = encode_cimg(&img);
        assert_eq!(&b[..5], b"CIMG1");
        assert_eq!(u32::from_le_bytes(b[5..9].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(b[9..13].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(b[13..17].try_into().unwrap()), 2);
        assert_eq!(b[17], 1);
        assert_eq!(b.len(), 18 + 4 * 8 * 2 * 16);
    }

    #[test]
    fn cimg_rejects_corruption() {
        let mut img = ComplexImage::zeros(4, 4, 1).unwrap();
        img.data_mut()[5] = Complex64::new(1.5, -2.0);
        let b = encode_cimg(&img);
        assert_eq!(decode_cimg(&b).unwrap(), img);
        assert!(decode_cimg(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode_cimg(&bad).is_err());
        let mut extra = b;
        extra.push(0);
        assert!(decode_cimg(&extra).is_err());
    }

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = std::env::temp_dir().join(format!("ebmrec-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.bin");
        atomic_write(&p, b"hello").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"hello");
        let entries: Vec<_> = fs::read_dir(&dir).unwrap().collect();
        assert_eq!(entries.len(), 1);
        fs::remove_dir_all(&dir).unwrap();
    }
}
