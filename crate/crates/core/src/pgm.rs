//! Binary PGM ("P5") reading and writing.
//!
//! Frames are stored with maxval 255. Fingerprints use maxval 65535 with
//! big-endian 16-bit samples.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PgmHeader {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    /// Byte offset of the first sample.
    pub data_offset: usize,
}

fn skip_whitespace_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        match bytes.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(pos) {
                    pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            _ => return pos,
        }
    }
}

fn read_header_int(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u32> {
    *pos = skip_whitespace_and_comments(bytes, *pos);
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| b.is_ascii_digit()) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format(start, format!("expected {what}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(start, format!("{what} out of range")))
}

pub fn parse_header(bytes: &[u8]) -> Result<PgmHeader> {
    if bytes.len() < 2 {
        return Err(Error::format(0, "truncated magic number"));
    }
    if &bytes[..2] != b"P5" {
        return Err(Error::format(
            0,
            format!(
                "wrong magic {:?}, expected \"P5\"",
                String::from_utf8_lossy(&bytes[..2])
            ),
        ));
    }
    let mut pos = 2;
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(Error::format(pos, "expected whitespace after magic"));
    }
    let width = read_header_int(bytes, &mut pos, "width")? as usize;
    let height = read_header_int(bytes, &mut pos, "height")? as usize;
    let maxval_offset = skip_whitespace_and_comments(bytes, pos);
    let maxval = read_header_int(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(maxval_offset, format!("invalid maxval {maxval}")));
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::format(pos, "expected single whitespace before raster"));
    }
    pos += 1;
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let expected = width * height * sample_bytes;
    if bytes.len() - pos < expected {
        return Err(Error::format(
            bytes.len(),
            format!(
                "truncated raster: {} bytes present, {expected} expected",
                bytes.len() - pos
            ),
        ));
    }
    Ok(PgmHeader {
        width,
        height,
        maxval,
        data_offset: pos,
    })
}

/// Decodes an 8-bit P5 image from memory.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame> {
    let header = parse_header(bytes)?;
    if header.maxval != 255 {
        // Offset of the maxval token: search back from the raster start.
        return Err(Error::format(
            header.data_offset - 1,
            format!("unsupported maxval {} (only 8-bit 255 is accepted)", header.maxval),
        ));
    }
    let raster = &bytes[header.data_offset..header.data_offset + header.width * header.height];
    let data = raster.iter().map(|&b| b as f64 / 255.0).collect();
    Frame::new(header.width, header.height, data)
        .map_err(|e| Error::format(0, format!("invalid frame: {e}")))
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend(
        frame
            .data()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_frame(&bytes)
}

pub fn save_frame(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_frame(frame)).map_err(|e| Error::io(path, e))
}

/// Encodes 16-bit samples (already scaled to `0..=65535`) as a maxval-65535 P5 image.
pub fn encode_pgm16(width: usize, height: usize, samples: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(samples.len() * 2);
    for s in samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

/// Decodes a 16-bit P5 image, returning `(width, height, samples)`.
pub fn decode_pgm16(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let header = parse_header(bytes)?;
    if header.maxval != 65535 {
        return Err(Error::format(
            header.data_offset - 1,
            format!("expected maxval 65535, got {}", header.maxval),
        ));
    }
    let raster = &bytes[header.data_offset..header.data_offset + 2 * header.width * header.height];
    let samples = raster
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((header.width, header.height, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(magic: &str, w: usize, h: usize, maxval: u32) -> Vec<u8> {
        format!("{magic}\n{w} {h}\n{maxval}\n").into_bytes()
    }

    #[test]
    fn rejects_color_magic() {
        let mut bytes = header("P6", 64, 64, 255);
        bytes.extend(vec![0u8; 64 * 64 * 3]);
        match decode_frame(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_16_bit_frames() {
        let mut bytes = header("P5", 64, 64, 65535);
        bytes.extend(vec![0u8; 64 * 64 * 2]);
        assert!(matches!(decode_frame(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn truncated_reports_offset() {
        let mut bytes = header("P5", 64, 64, 255);
        let hdr_len = bytes.len();
        bytes.extend(vec![0u8; 100]);
        match decode_frame(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, hdr_len + 100),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_header() {
        assert!(matches!(decode_frame(b"P5\nabc 64\n255\n"), Err(Error::Format { offset: 3, .. })));
        assert!(matches!(decode_frame(b"P"), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n64 64\n# depth\n255\n".to_vec();
        bytes.extend(vec![128u8; 64 * 64]);
        let f = decode_frame(&bytes).unwrap();
        assert_eq!((f.width(), f.height()), (64, 64));
        assert!((f.get(3, 3) - 128.0 / 255.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn save_load_within_quantization(seed in any::<u64>(), w in 64usize..80, h in 64usize..80) {
            let mut state = seed;
            let frame = Frame::from_fn(w, h, |_, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            }).unwrap();
            let back = decode_frame(&encode_frame(&frame)).unwrap();
            prop_assert_eq!((back.width(), back.height()), (w, h));
            let worst = frame.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(worst <= 1.0 / 255.0);
        }
    }
}
