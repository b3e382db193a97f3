use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit planar image. Plane 0 is luma; further planes, if any, are
/// full-resolution chroma.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    planes: Vec<Vec<u8>>,
}

impl Image {
    pub fn gray(width: u32, height: u32, luma: Vec<u8>) -> Result<Self> {
        Self::from_planes(width, height, vec![luma])
    }

    pub fn from_planes(width: u32, height: u32, planes: Vec<Vec<u8>>) -> Result<Self> {
        let n = width as usize * height as usize;
        if n == 0 {
            return Err(Error::Dimension(format!("empty image {width}x{height}")));
        }
        if planes.is_empty() {
            return Err(Error::Dimension("image needs a luma plane".into()));
        }
        if let Some(bad) = planes.iter().find(|p| p.len() != n) {
            return Err(Error::Dimension(format!(
                "plane has {} samples, expected {width}x{height}",
                bad.len()
            )));
        }
        Ok(Image {
            width,
            height,
            planes,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn planes(&self) -> &[Vec<u8>] {
        &self.planes
    }

    pub fn luma(&self) -> &[u8] {
        &self.planes[0]
    }

    pub fn pixel(&self, x: u32, y: u32, plane: usize) -> u8 {
        self.planes[plane][(y * self.width + x) as usize]
    }

    /// Binary PGM (P5, maxval 255) of the luma plane.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(self.luma());
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut header = Vec::with_capacity(4);
        while header.len() < 4 {
            // skip whitespace and comments
            while pos < bytes.len() {
                match bytes[pos] {
                    b'#' => {
                        while pos < bytes.len() && bytes[pos] != b'\n' {
                            pos += 1;
                        }
                    }
                    b if b.is_ascii_whitespace() => pos += 1,
                    _ => break,
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format("truncated PGM header".into()));
            }
            header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if header[0] != "P5" {
            return Err(Error::Format(format!("not a binary PGM (magic {:?})", header[0])));
        }
        let num = |i: usize, what: &str| -> Result<u32> {
            header[i]
                .parse()
                .map_err(|_| Error::Format(format!("bad PGM {what} {:?}", header[i])))
        };
        let (width, height, maxval) = (num(1, "width")?, num(2, "height")?, num(3, "maxval")?);
        if maxval != 255 {
            return Err(Error::Format(format!("PGM maxval {maxval} unsupported (need 255)")));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let n = width as usize * height as usize;
        let data = bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::Format(format!("PGM raster truncated, need {n} bytes")))?;
        Self::gray(width, height, data.to_vec())
    }
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Image::from_pgm(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_pgm(img: &Image, path: &Path) -> Result<()> {
    fs::write(path, img.to_pgm()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_is_bit_exact() {
        let img = Image::gray(3, 2, vec![0, 1, 2, 253, 254, 255]).unwrap();
        let bytes = img.to_pgm();
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        let back = Image::from_pgm(&bytes).unwrap();
        assert_eq!(back, img);
        assert_eq!(back.to_pgm(), bytes);
    }

    #[test]
    fn pgm_header_comments() {
        let mut bytes = b"P5 # made by hand\n# another\n2 1\n255\n".to_vec();
        bytes.extend([7, 9]);
        let img = Image::from_pgm(&bytes).unwrap();
        assert_eq!(img.luma(), &[7, 9]);
        assert_eq!(img.pixel(1, 0, 0), 9);
    }

    #[test]
    fn pgm_errors() {
        assert!(Image::from_pgm(b"P6\n1 1\n255\n\0\0\0").is_err());
        assert!(Image::from_pgm(b"P5\n2 2\n255\n\0").is_err());
        assert!(Image::from_pgm(b"P5\n1 1\n65535\n\0\0").is_err());
        assert!(Image::from_pgm(b"P5\n1").is_err());
    }

    #[test]
    fn plane_size_checked() {
        assert!(Image::from_planes(2, 2, vec![vec![0; 4], vec![0; 3]]).is_err());
        assert!(Image::gray(0, 2, vec![]).is_err());
    }
}
