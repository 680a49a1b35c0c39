//! Binary (P5) PGM codecs.
//!
//! Disparity rasters are 16-bit big-endian Q8.8 fixed point
//! (`disparity = raw / 256`, raw 0 = invalid). Tracking images are 8-bit.

use crate::error::{Error, Result};
use crate::model::DisparityMap;
use crate::tracking::GrayImage;

pub const DISPARITY_MAXVAL: u32 = 65535;
pub const IMAGE_MAXVAL: u32 = 255;
const Q88_SCALE: f64 = 256.0;

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::BadMagic);
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for (n, field) in fields.iter_mut().enumerate() {
        // whitespace and comments before each field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::BadHeader(format!("expected header field {}", n + 1)));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::BadHeader("header field out of range".into()))?;
    }
    // exactly one whitespace byte separates the header from the payload
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::BadHeader("missing separator after maxval".into())),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::BadHeader(format!("empty raster {width}x{height}")));
    }
    Ok(Header {
        width: usize::try_from(width).map_err(|_| Error::BadHeader("width".into()))?,
        height: usize::try_from(height).map_err(|_| Error::BadHeader("height".into()))?,
        maxval: u32::try_from(maxval).unwrap_or(u32::MAX),
        data_offset: pos,
    })
}

fn payload<'a>(bytes: &'a [u8], header: &Header, bytes_per_sample: usize) -> Result<&'a [u8]> {
    let needed = header
        .width
        .checked_mul(header.height)
        .and_then(|n| n.checked_mul(bytes_per_sample))
        .ok_or_else(|| Error::BadHeader("raster dimensions overflow".into()))?;
    let available = bytes.len() - header.data_offset;
    if available < needed {
        return Err(Error::TruncatedPayload { needed, available });
    }
    Ok(&bytes[header.data_offset..header.data_offset + needed])
}

pub fn read_disparity_pgm(bytes: &[u8]) -> Result<DisparityMap> {
    let header = parse_header(bytes)?;
    if header.maxval != DISPARITY_MAXVAL {
        return Err(Error::BadMaxval {
            found: header.maxval,
            expected: DISPARITY_MAXVAL,
        });
    }
    let data = payload(bytes, &header, 2)?;
    let values = data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / Q88_SCALE)
        .collect();
    Ok(DisparityMap {
        width: header.width,
        height: header.height,
        values,
    })
}

/// Q8.8 raw sample for a disparity value (round to nearest, saturating).
pub fn quantize_disparity(d: f64) -> u16 {
    (d * Q88_SCALE).round().clamp(0.0, u16::MAX as f64) as u16
}

/// The value a disparity takes after one encode/decode cycle.
pub fn dequantize(d: f64) -> f64 {
    quantize_disparity(d) as f64 / Q88_SCALE
}

pub fn write_disparity_pgm(map: &DisparityMap) -> Vec<u8> {
    let header = format!("P5\n{} {}\n{}\n", map.width, map.height, DISPARITY_MAXVAL);
    let mut out = Vec::with_capacity(header.len() + map.values.len() * 2);
    out.extend_from_slice(header.as_bytes());
    for &v in &map.values {
        out.extend_from_slice(&quantize_disparity(v).to_be_bytes());
    }
    out
}

pub fn read_gray_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let header = parse_header(bytes)?;
    if header.maxval != IMAGE_MAXVAL {
        return Err(Error::BadMaxval {
            found: header.maxval,
            expected: IMAGE_MAXVAL,
        });
    }
    let data = payload(bytes, &header, 1)?;
    Ok(GrayImage {
        width: header.width,
        height: header.height,
        values: data.to_vec(),
    })
}

pub fn write_gray_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n{}\n", img.width, img.height, IMAGE_MAXVAL);
    let mut out = Vec::with_capacity(header.len() + img.values.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.values);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disparity_bytes(w: usize, h: usize, samples: &[u16]) -> Vec<u8> {
        let mut b = format!("P5\n{w} {h}\n65535\n").into_bytes();
        for s in samples {
            b.extend_from_slice(&s.to_be_bytes());
        }
        b
    }

    #[test]
    fn decodes_q88_samples() {
        let map = read_disparity_pgm(&disparity_bytes(2, 1, &[256, 0])).unwrap();
        assert_eq!((map.width, map.height), (2, 1));
        assert_eq!(map.values, vec![1.0, 0.0]);
    }

    #[test]
    fn raw_12800_is_fifty_pixels() {
        let map = read_disparity_pgm(&disparity_bytes(1, 1, &[12800])).unwrap();
        assert_eq!(map.values[0], 50.0);
    }

    #[test]
    fn quantization_rounds_to_nearest() {
        assert_eq!(quantize_disparity(50.004), 12801);
        assert_eq!(dequantize(50.004), 50.00390625);
        assert_eq!(quantize_disparity(0.0), 0);
        assert_eq!(quantize_disparity(1e9), u16::MAX);
    }

    #[test]
    fn rejects_wrong_maxval() {
        let b = b"P5\n2 1\n255\n\x01\x02".to_vec();
        assert!(matches!(
            read_disparity_pgm(&b),
            Err(Error::BadMaxval { found: 255, .. })
        ));
    }

    #[test]
    fn rejects_short_payload() {
        let mut b = b"P5\n4 4\n65535\n".to_vec();
        b.extend(std::iter::repeat_n(0u8, 30));
        assert!(matches!(
            read_disparity_pgm(&b),
            Err(Error::TruncatedPayload {
                needed: 32,
                available: 30
            })
        ));
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(matches!(read_disparity_pgm(b"P2\n1 1\n65535\n"), Err(Error::BadMagic)));
        assert!(matches!(read_disparity_pgm(b""), Err(Error::BadMagic)));
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut b = b"P5\n# made by hand\n1 1\n# another\n65535\n".to_vec();
        b.extend_from_slice(&512u16.to_be_bytes());
        assert_eq!(read_disparity_pgm(&b).unwrap().values, vec![2.0]);
    }

    #[test]
    fn gray_round_trip() {
        let img = GrayImage {
            width: 3,
            height: 2,
            values: vec![0, 10, 20, 30, 40, 255],
        };
        assert_eq!(read_gray_pgm(&write_gray_pgm(&img)).unwrap(), img);
    }

    proptest! {
        #[test]
        fn decoding_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = read_disparity_pgm(&bytes);
            let _ = read_gray_pgm(&bytes);
        }

        #[test]
        fn header_prefixed_garbage_never_panics(
            w in 0usize..5, h in 0usize..5, tail in proptest::collection::vec(any::<u8>(), 0..64)
        ) {
            let mut b = format!("P5 {w} {h} 65535\n").into_bytes();
            b.extend(tail);
            let _ = read_disparity_pgm(&b);
        }

        #[test]
        fn encode_decode_is_idempotent_after_quantization(
            values in proptest::collection::vec(0.0f64..255.99, 1..40)
        ) {
            let map = DisparityMap { width: values.len(), height: 1, values };
            let once = read_disparity_pgm(&write_disparity_pgm(&map)).unwrap();
            for (a, b) in map.values.iter().zip(&once.values) {
                prop_assert!((a - b).abs() <= 0.5 / 256.0 + 1e-12);
            }
            prop_assert_eq!(write_disparity_pgm(&once), write_disparity_pgm(&map));
        }
    }
}
