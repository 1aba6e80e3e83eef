//! Segment file: little-endian `"EEGS"`, `u32` version, `u32` segment count,
//! `u32` segment length, `f32` sample rate, then the samples as `f32`.

use std::fs;
use std::path::Path;

use super::{ForgeError, Segment};

pub const SEGMENT_MAGIC: [u8; 4] = *b"EEGS";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

pub fn encode_segments(segments: &[Segment]) -> Result<Vec<u8>, ForgeError> {
    let (len, fs) = match segments.first() {
        Some(s) => (s.len(), s.fs),
        None => (0, 0.0),
    };
    if segments.iter().any(|s| s.len() != len || s.fs.to_bits() != fs.to_bits()) {
        return Err(ForgeError::NonUniform);
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * len * segments.len());
    out.extend_from_slice(&SEGMENT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(segments.len() as u32).to_le_bytes());
    out.extend_from_slice(&(len as u32).to_le_bytes());
    out.extend_from_slice(&fs.to_le_bytes());
    for s in segments {
        for v in &s.samples {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn decode_segments(bytes: &[u8]) -> Result<Vec<Segment>, ForgeError> {
    if bytes.len() < 4 {
        return Err(ForgeError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != SEGMENT_MAGIC {
        return Err(ForgeError::BadMagic { found: magic });
    }
    if bytes.len() < HEADER_LEN {
        return Err(ForgeError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(ForgeError::UnsupportedVersion(version));
    }
    let count = u32_at(bytes, 8) as usize;
    let len = u32_at(bytes, 12) as usize;
    let fs = f32::from_le_bytes(bytes[16..20].try_into().unwrap());
    let needed = HEADER_LEN + 4 * count * len;
    if bytes.len() < needed {
        return Err(ForgeError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(ForgeError::TrailingBytes(bytes.len() - needed));
    }
    let body = &bytes[HEADER_LEN..];
    (0..count)
        .map(|i| {
            let samples = body[4 * i * len..4 * (i + 1) * len]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Segment::new(samples, fs)
        })
        .collect()
}

pub fn write_segments(path: impl AsRef<Path>, segments: &[Segment]) -> Result<(), ForgeError> {
    fs::write(path, encode_segments(segments)?)?;
    Ok(())
}

pub fn read_segments(path: impl AsRef<Path>) -> Result<Vec<Segment>, ForgeError> {
    decode_segments(&fs::read(path)?)
}

/// One segment per row, comma separated, no header.
pub fn read_segments_csv(path: impl AsRef<Path>, fs: f32) -> Result<Vec<Segment>, ForgeError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let samples = record
            .iter()
            .filter(|f| !f.is_empty())
            .map(|f| {
                f.parse::<f32>()
                    .map_err(|e| ForgeError::Degenerate(format!("row {}: {f:?}: {e}", row + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(Segment::new(samples, fs)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segments() -> Vec<Segment> {
        (0..3)
            .map(|i| Segment::new((0..8).map(|j| (i * 8 + j) as f32 * 0.125 - 1.0).collect(), 256.0).unwrap())
            .collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = segments();
        let bytes = encode_segments(&s).unwrap();
        assert_eq!(bytes.len(), 20 + 3 * 8 * 4);
        assert_eq!(&bytes[..4], b"EEGS");
        assert_eq!(decode_segments(&bytes).unwrap(), s);
        assert_eq!(encode_segments(&decode_segments(&bytes).unwrap()).unwrap(), bytes);
    }

    #[test]
    fn empty_list_is_a_valid_file() {
        let bytes = encode_segments(&[]).unwrap();
        assert_eq!(u32_at(&bytes, 8), 0);
        assert!(decode_segments(&bytes).unwrap().is_empty());
    }

    #[test]
    fn distinct_errors() {
        let bytes = encode_segments(&segments()).unwrap();
        assert!(matches!(
            decode_segments(&bytes[..bytes.len() - 3]),
            Err(ForgeError::Truncated { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_segments(&bad), Err(ForgeError::BadMagic { .. })));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(decode_segments(&v2), Err(ForgeError::UnsupportedVersion(2))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(decode_segments(&extra), Err(ForgeError::TrailingBytes(1))));
    }

    #[test]
    fn non_uniform_rejected() {
        let mut s = segments();
        s.push(Segment::new(vec![0.0; 4], 256.0).unwrap());
        assert!(matches!(encode_segments(&s), Err(ForgeError::NonUniform)));
    }

    #[test]
    fn csv_rows_become_segments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "1.0, 2.5,-3\n0,0,1e-3\n").unwrap();
        let s = read_segments_csv(&p, 200.0).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].samples, vec![1.0, 2.5, -3.0]);
        assert_eq!(s[1].fs, 200.0);
    }
}
