//! Little-endian binary maps and PGM masks.
//!
//! `DMAP`/`SMAP`: magic, u32 version, u32 width, u32 height, then row-major
//! f32 values. `FMAP`: magic, u32 version, u32 width, height, channels,
//! pixel-major f32 descriptors, then one validity byte per pixel.

use std::path::Path;

use super::{read_bytes, write_bytes, IoError};
use crate::correspondence::FeatureMap;
use crate::render::Grid;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    Depth,
    Silhouette,
}

impl MapKind {
    fn magic(self) -> &'static [u8; 4] {
        match self {
            MapKind::Depth => b"DMAP",
            MapKind::Silhouette => b"SMAP",
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        if self.bytes.len() - self.pos < n {
            return Err(IoError::format("unexpected end of data"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, IoError> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| IoError::format("size overflow"))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<(), IoError> {
        let m = self.take(4)?;
        if m != magic {
            return Err(IoError::format(format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(m)
            )));
        }
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(IoError::format(format!("unsupported version {v}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<(), IoError> {
        if self.pos != self.bytes.len() {
            return Err(IoError::format(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn dims(r: &mut Reader<'_>) -> Result<(usize, usize), IoError> {
    let w = r.u32()? as usize;
    let h = r.u32()? as usize;
    if w == 0 || h == 0 {
        return Err(IoError::format(format!("empty {w}x{h} map")));
    }
    Ok((w, h))
}

pub fn encode_map(grid: &Grid<f64>, kind: MapKind) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + grid.len() * 4);
    out.extend_from_slice(kind.magic());
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    for v in grid.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_map(bytes: &[u8], kind: MapKind) -> Result<Grid<f64>, IoError> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(kind.magic())?;
    let (w, h) = dims(&mut r)?;
    let data: Vec<f64> = r.f32s(w * h)?.into_iter().map(f64::from).collect();
    r.finish()?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err(IoError::format("non-finite map value"));
    }
    Grid::from_vec(w, h, data).map_err(|e| IoError::format(e.to_string()))
}

pub fn encode_feature_map(map: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + map.data().len() * 4 + map.valid().len());
    out.extend_from_slice(b"FMAP");
    for v in [FORMAT_VERSION, map.width() as u32, map.height() as u32, map.channels() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in map.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend(map.valid().iter().map(|v| *v as u8));
    out
}

pub fn decode_feature_map(bytes: &[u8]) -> Result<FeatureMap, IoError> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(b"FMAP")?;
    let (w, h) = dims(&mut r)?;
    let c = r.u32()? as usize;
    let data = r.f32s(w * h * c)?;
    let valid = r
        .take(w * h)?
        .iter()
        .map(|b| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(IoError::format(format!("validity byte {b}"))),
        })
        .collect::<Result<Vec<bool>, _>>()?;
    r.finish()?;
    FeatureMap::new(w, h, c, data, valid).map_err(|e| IoError::format(e.to_string()))
}

/// Binary PGM (P5) with maxval up to 65535, scaled to `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Grid<f64>, IoError> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(IoError::format("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(IoError::format(format!("expected P5, found {}", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| IoError::format(format!("bad PGM number {s:?}")));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(IoError::format(format!("bad PGM header {w}x{h} max {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let bpp = if maxval < 256 { 1 } else { 2 };
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() != w * h * bpp {
        return Err(IoError::format(format!("PGM raster has {} bytes, expected {}", raster.len(), w * h * bpp)));
    }
    let m = maxval as f64;
    let data = if bpp == 1 {
        raster.iter().map(|b| *b as f64 / m).collect()
    } else {
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / m).collect()
    };
    Grid::from_vec(w, h, data).map_err(|e| IoError::format(e.to_string()))
}

/// 8-bit PGM of values clamped to `[0, 1]`.
pub fn encode_pgm(grid: &Grid<f64>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    out.extend(grid.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn read_depth(path: &Path) -> Result<Grid<f64>, IoError> {
    decode_map(&read_bytes(path)?, MapKind::Depth)
}

pub fn write_depth(path: &Path, grid: &Grid<f64>) -> Result<(), IoError> {
    write_bytes(path, &encode_map(grid, MapKind::Depth))
}

pub fn write_silhouette(path: &Path, grid: &Grid<f64>) -> Result<(), IoError> {
    write_bytes(path, &encode_map(grid, MapKind::Silhouette))
}

pub fn write_pgm(path: &Path, grid: &Grid<f64>) -> Result<(), IoError> {
    write_bytes(path, &encode_pgm(grid))
}

/// Mask from an SMAP or PGM file, chosen by content.
pub fn read_mask(path: &Path) -> Result<Grid<f64>, IoError> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(b"SMAP") {
        decode_map(&bytes, MapKind::Silhouette)
    } else {
        decode_pgm(&bytes)
    }
}

pub fn read_feature_map(path: &Path) -> Result<FeatureMap, IoError> {
    decode_feature_map(&read_bytes(path)?)
}

pub fn write_feature_map(path: &Path, map: &FeatureMap) -> Result<(), IoError> {
    write_bytes(path, &encode_feature_map(map))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid<f64> {
        Grid::from_vec(3, 2, vec![0.0, 1.5, 2.25, -1.0, 0.125, 1e-3]).unwrap()
    }

    #[test]
    fn depth_map_roundtrip_is_exact() {
        let bytes = encode_map(&grid(), MapKind::Depth);
        assert_eq!(&bytes[..4], b"DMAP");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), FORMAT_VERSION);
        let back = decode_map(&bytes, MapKind::Depth).unwrap();
        assert_eq!(encode_map(&back, MapKind::Depth), bytes);
        assert_eq!(*back.get(1, 0), 1.5);
    }

    #[test]
    fn map_errors() {
        let bytes = encode_map(&grid(), MapKind::Depth);
        assert!(decode_map(&bytes, MapKind::Silhouette).is_err());
        assert!(decode_map(&bytes[..bytes.len() - 1], MapKind::Depth).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_map(&extra, MapKind::Depth).is_err());
        let mut version = bytes.clone();
        version[4] = 9;
        assert!(decode_map(&version, MapKind::Depth).is_err());
    }

    #[test]
    fn feature_map_roundtrip() {
        let data: Vec<f32> = (0..24).map(|i| i as f32 * 0.25 - 2.0).collect();
        let mut valid = vec![true; 6];
        valid[4] = false;
        let m = FeatureMap::new(3, 2, 4, data, valid).unwrap();
        let bytes = encode_feature_map(&m);
        let back = decode_feature_map(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_feature_map(&back), bytes);
    }

    #[test]
    fn pgm_roundtrip_and_scaling() {
        let g = Grid::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let bytes = encode_pgm(&g);
        assert_eq!(decode_pgm(&bytes).unwrap(), g);
        let with_comment = b"P5\n# mask\n2 1\n255\n\x00\xff".to_vec();
        assert_eq!(decode_pgm(&with_comment).unwrap().data(), &[0.0, 1.0]);
        let wide = b"P5 1 1 65535\n\xff\xff".to_vec();
        assert_eq!(decode_pgm(&wide).unwrap().data(), &[1.0]);
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
    }
}
