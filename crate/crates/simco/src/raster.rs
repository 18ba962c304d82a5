//! 8-bit RGB raster container with binary PPM (P6) i/o.
//!
//! PPM is the bit-exact reference format for generated images: the emitted
//! byte stream is a pure function of the pixel data.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, SimcoError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    /// Interleaved RGB, row-major.
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32) -> Self {
        RasterImage {
            width,
            height,
            data: vec![0; (width as usize) * (height as usize) * 3],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        ((y as usize) * (self.width as usize) + (x as usize)) * 3
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.data[o] = rgb[0];
        self.data[o + 1] = rgb[1];
        self.data[o + 2] = rgb[2];
    }

    /// Serialize as binary PPM (P6, maxval 255).
    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let header = format!("P6\n{} {}\n255\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + self.data.len());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path).map_err(|e| SimcoError::io(path, e))?;
        file.write_all(&self.to_ppm_bytes())
            .map_err(|e| SimcoError::io(path, e))
    }

    /// Parse a binary PPM produced by [`RasterImage::to_ppm_bytes`].
    ///
    /// Accepts whitespace/comment variations in the header but requires P6
    /// with maxval 255.
    pub fn from_ppm_bytes(bytes: &[u8]) -> Result<Self> {
        let malformed = |detail: &str| SimcoError::Malformed {
            what: "ppm",
            detail: detail.to_string(),
        };
        let mut pos = 0usize;
        let token = |pos: &mut usize| -> Result<String> {
            // skip whitespace and '#' comments
            loop {
                while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                    *pos += 1;
                }
                if *pos < bytes.len() && bytes[*pos] == b'#' {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if start == *pos {
                return Err(malformed("truncated header"));
            }
            Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
        };

        if token(&mut pos)? != "P6" {
            return Err(malformed("not a P6 file"));
        }
        let width: u32 = token(&mut pos)?
            .parse()
            .map_err(|_| malformed("bad width"))?;
        let height: u32 = token(&mut pos)?
            .parse()
            .map_err(|_| malformed("bad height"))?;
        if token(&mut pos)? != "255" {
            return Err(malformed("maxval must be 255"));
        }
        // exactly one whitespace byte separates header and pixel data
        pos += 1;
        let expected = (width as usize) * (height as usize) * 3;
        if bytes.len() < pos + expected {
            return Err(malformed("truncated pixel data"));
        }
        Ok(RasterImage {
            width,
            height,
            data: bytes[pos..pos + expected].to_vec(),
        })
    }

    pub fn load_ppm(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| SimcoError::io(path, e))?;
        Self::from_ppm_bytes(&bytes)
    }
}
