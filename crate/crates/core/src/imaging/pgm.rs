use std::fs;
use std::path::Path;

use super::{Image, ImagingError};

/// Binary PGM (P5, maxval 255).
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image, ImagingError> {
    let mut pos = 0usize;
    let mut header = Vec::with_capacity(4);
    while header.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            match bytes[pos] {
                b' ' | b'\t' | b'\n' | b'\r' => pos += 1,
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(ImagingError::Pgm("truncated header".into()));
        }
        header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if header[0] != "P5" {
        return Err(ImagingError::Pgm(format!("unsupported magic {:?}", header[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| ImagingError::Pgm(format!("bad number {s:?}")));
    let (w, h, maxval) = (parse(&header[1])?, parse(&header[2])?, parse(&header[3])?);
    if maxval != 255 {
        return Err(ImagingError::Pgm(format!("maxval {maxval} unsupported")));
    }
    if w == 0 || h == 0 {
        return Err(ImagingError::Pgm("zero dimension".into()));
    }
    // exactly one whitespace byte separates header and raster
    pos += 1;
    let data = bytes.get(pos..pos + w * h).ok_or_else(|| ImagingError::Pgm("truncated raster".into()))?;
    Ok(Image::new(w, h, data.to_vec()))
}

pub fn write_pgm(path: impl AsRef<Path>, img: &Image) -> Result<(), ImagingError> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image, ImagingError> {
    decode_pgm(&fs::read(path)?)
}
