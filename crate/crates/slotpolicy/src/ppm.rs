//! Binary PPM (P6) image I/O.

use std::io::{self, Read, Write};
use std::path::Path;

pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> io::Result<()> {
    assert_eq!(rgb.len(), width * height * 3, "pixel buffer size");
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P6\n{} {}\n255\n", width, height)?;
    f.write_all(rgb)?;
    f.flush()
}

pub fn read_ppm(path: &Path) -> io::Result<(usize, usize, Vec<u8>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let header_err = || io::Error::new(io::ErrorKind::InvalidData, "bad ppm header");
    // Header: three whitespace-separated tokens after the magic.
    if !bytes.starts_with(b"P6") {
        return Err(header_err());
    }
    let mut pos = 2;
    let mut fields = Vec::new();
    while fields.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let tok = std::str::from_utf8(&bytes[start..pos]).map_err(|_| header_err())?;
        fields.push(tok.parse::<usize>().map_err(|_| header_err())?);
    }
    pos += 1; // single whitespace after maxval
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 || bytes.len() < pos + w * h * 3 {
        return Err(header_err());
    }
    Ok((w, h, bytes[pos..pos + w * h * 3].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.ppm");
        let rgb: Vec<u8> = (0..4 * 3 * 3).map(|i| (i * 7 % 256) as u8).collect();
        write_ppm(&p, 4, 3, &rgb).unwrap();
        let (w, h, back) = read_ppm(&p).unwrap();
        assert_eq!((w, h), (4, 3));
        assert_eq!(back, rgb);
    }
}
