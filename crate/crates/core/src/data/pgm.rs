use std::fs;
use std::path::Path;

use super::DataError;
use crate::graph::StreetMap;

/// Binary PGM (P5) with maxval 255.
pub fn encode_pgm(height: usize, width: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Parses a P5 image with maxval <= 255, tolerating `#` comments in the header.
pub fn decode_pgm(bytes: &[u8]) -> Result<StreetMap, DataError> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(DataError::invalid("PGM header ended early"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(DataError::BadMagic {
            expected: "P5",
            found: fields[0].as_bytes().to_vec(),
        });
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| DataError::invalid(format!("bad PGM header field `{s}`")))
    };
    let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(DataError::invalid(format!("unsupported PGM maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let payload = &bytes[(pos + 1).min(bytes.len())..];
    let expected = width * height;
    if payload.len() < expected {
        return Err(DataError::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    StreetMap::new(height, width, payload[..expected].to_vec()).map_err(|e| DataError::invalid(e.to_string()))
}

pub fn write_pgm(path: &Path, height: usize, width: usize, pixels: &[u8]) -> Result<(), DataError> {
    fs::write(path, encode_pgm(height, width, pixels)).map_err(|e| DataError::io(path, e))
}

pub fn read_street_map(path: &Path) -> Result<StreetMap, DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_pgm(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let px = vec![0, 10, 255, 3, 0, 7];
        let m = decode_pgm(&encode_pgm(2, 3, &px)).unwrap();
        assert_eq!((m.height, m.width), (2, 3));
        assert_eq!(m.pixels, px);
    }

    #[test]
    fn comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[4, 5]);
        assert_eq!(decode_pgm(&bytes).unwrap().pixels, vec![4, 5]);
    }

    #[test]
    fn rejects_ascii_pgm_and_short_raster() {
        assert!(matches!(decode_pgm(b"P2\n1 1\n255\n0"), Err(DataError::BadMagic { .. })));
        assert!(matches!(
            decode_pgm(b"P5\n2 2\n255\n\x01"),
            Err(DataError::Truncated { expected: 4, actual: 1 })
        ));
    }
}
