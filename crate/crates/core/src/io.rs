//! Image file formats: binary PGM (8/16 bit) and little-endian `f32` raw
//! dumps with a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseError, Result};
use crate::image::{Image, Interval};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm8,
    Pgm16,
    RawF32,
}

impl ImageFormat {
    /// Guess from the file extension: `.f32` is raw, everything else PGM
    /// (the header decides the bit depth on load).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("f32") | Some("raw") => ImageFormat::RawF32,
            _ => ImageFormat::Pgm8,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            ImageFormat::Pgm8 => "pgm8",
            ImageFormat::Pgm16 => "pgm16",
            ImageFormat::RawF32 => "raw_f32",
        }
    }

    fn maxval(&self) -> Option<u32> {
        match self {
            ImageFormat::Pgm8 => Some(255),
            ImageFormat::Pgm16 => Some(65535),
            ImageFormat::RawF32 => None,
        }
    }
}

impl FromStr for ImageFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgm8" => Ok(ImageFormat::Pgm8),
            "pgm16" => Ok(ImageFormat::Pgm16),
            "raw_f32" | "f32" => Ok(ImageFormat::RawF32),
            other => Err(Error::InvalidParameter(format!("unknown image format {other:?}"))),
        }
    }
}

/// Sidecar describing a raw `f32` dump.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawSidecar {
    pub width: usize,
    pub height: usize,
    pub lo: f64,
    pub hi: f64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn load_image(path: &Path, format: ImageFormat) -> Result<Image> {
    match format {
        ImageFormat::RawF32 => load_raw(path),
        _ => {
            let bytes = fs::read(path)?;
            decode_pgm(&bytes, format)
        }
    }
}

/// Loads a PGM whose bit depth is taken from its header.
pub fn load_pgm_any(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    let header = parse_pgm_header(&bytes)?;
    let format = if header.maxval > 255 {
        ImageFormat::Pgm16
    } else {
        ImageFormat::Pgm8
    };
    decode_pgm(&bytes, format)
}

/// Loads by extension: `.f32` raw, otherwise PGM with header-detected depth.
pub fn load_auto(path: &Path) -> Result<Image> {
    match ImageFormat::from_path(path) {
        ImageFormat::RawF32 => load_raw(path),
        _ => load_pgm_any(path),
    }
}

pub fn save_image(img: &Image, path: &Path, format: ImageFormat) -> Result<()> {
    match format {
        ImageFormat::RawF32 => save_raw(img, path),
        _ => {
            let bytes = encode_pgm(img, format)?;
            write_atomic(path, &bytes)
        }
    }
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct PgmHeader {
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn parse_pgm_header(bytes: &[u8]) -> Result<PgmHeader> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(ParseError::MalformedHeader("missing P5 magic".into()).into());
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
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
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(ParseError::MalformedHeader(format!("expected a number at byte {start}")).into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ParseError::MalformedHeader("numeric field overflow".into()))?;
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(ParseError::MalformedHeader("missing whitespace after maxval".into()).into());
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(ParseError::MalformedHeader("zero dimension".into()).into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(ParseError::MalformedHeader(format!("maxval {maxval} out of range")).into());
    }
    Ok(PgmHeader {
        width: width as usize,
        height: height as usize,
        maxval: maxval as u32,
        data_offset: pos + 1,
    })
}

fn decode_pgm(bytes: &[u8], format: ImageFormat) -> Result<Image> {
    let header = parse_pgm_header(bytes)?;
    let wide = header.maxval > 255;
    match (format, wide) {
        (ImageFormat::Pgm8, true) => {
            return Err(ParseError::MalformedHeader(format!(
                "maxval {} is not an 8-bit PGM",
                header.maxval
            ))
            .into())
        }
        (ImageFormat::Pgm16, false) => {
            return Err(ParseError::MalformedHeader(format!(
                "maxval {} is not a 16-bit PGM",
                header.maxval
            ))
            .into())
        }
        _ => {}
    }
    let n = header.width * header.height;
    let bpp = if wide { 2 } else { 1 };
    let payload = &bytes[header.data_offset.min(bytes.len())..];
    if payload.len() < n * bpp {
        return Err(ParseError::TruncatedData {
            expected: n * bpp,
            found: payload.len(),
        }
        .into());
    }
    let data: Vec<f64> = if wide {
        payload[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    } else {
        payload[..n].iter().map(|&b| b as f64).collect()
    };
    if data.iter().any(|&v| v > header.maxval as f64) {
        return Err(ParseError::MalformedHeader("sample exceeds maxval".into()).into());
    }
    let hi = format.maxval().unwrap_or(255) as f64;
    Image::new(header.width, header.height, data, Interval { lo: 0.0, hi })
}

fn encode_pgm(img: &Image, format: ImageFormat) -> Result<Vec<u8>> {
    let maxval = format.maxval().expect("integer format");
    let mut out = format!("P5\n{} {}\n{}\n", img.width(), img.height(), maxval).into_bytes();
    for &v in img.data() {
        if !(0.0..=maxval as f64).contains(&v) {
            return Err(Error::RangeOverflow {
                value: v,
                format: format.name(),
            });
        }
        let q = v.round() as u32;
        if maxval > 255 {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    Ok(out)
}

fn load_raw(path: &Path) -> Result<Image> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Err(ParseError::MissingSidecar(side).into());
    }
    let sidecar: RawSidecar = serde_json::from_slice(&fs::read(&side)?)
        .map_err(|e| ParseError::InvalidSidecar(e.to_string()))?;
    let range = Interval::new(sidecar.lo, sidecar.hi)
        .map_err(|e| ParseError::InvalidSidecar(e.to_string()))?;
    let bytes = fs::read(path)?;
    let n = sidecar.width * sidecar.height;
    if bytes.len() < 4 * n {
        return Err(ParseError::TruncatedData {
            expected: 4 * n,
            found: bytes.len(),
        }
        .into());
    }
    let data = bytes[..4 * n]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Image::new(sidecar.width, sidecar.height, data, range)
}

/// Nearest `f32` that does not leave `[lo, hi]`.
fn to_f32_inside(v: f64, range: Interval) -> f32 {
    let mut f = v as f32;
    if (f as f64) > range.hi {
        f = f.next_down();
    } else if (f as f64) < range.lo {
        f = f.next_up();
    }
    f
}

fn save_raw(img: &Image, path: &Path) -> Result<()> {
    let range = img.range();
    let mut bytes = Vec::with_capacity(4 * img.len());
    for &v in img.data() {
        bytes.extend_from_slice(&to_f32_inside(v, range).to_le_bytes());
    }
    let sidecar = RawSidecar {
        width: img.width(),
        height: img.height(),
        lo: range.lo,
        hi: range.hi,
    };
    write_atomic(path, &bytes)?;
    write_atomic(&sidecar_path(path), serde_json::to_string(&sidecar)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_small_p5() {
        let bytes = b"P5\n2 2\n255\n\x00\x00\x00\x01";
        let img = decode_pgm(bytes, ImageFormat::Pgm8).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert_eq!(img.data(), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(img.range(), Interval { lo: 0.0, hi: 255.0 });
    }

    #[test]
    fn header_comments_are_skipped() {
        let bytes = b"P5 # made by hand\n1 1\n# depth\n255\n\x07";
        let img = decode_pgm(bytes, ImageFormat::Pgm8).unwrap();
        assert_eq!(img.data(), &[7.0]);
    }

    #[test]
    fn truncated_payload() {
        let bytes = b"P5\n2 2\n255\n\x00\x00\x00";
        let err = decode_pgm(bytes, ImageFormat::Pgm8).unwrap_err();
        assert!(matches!(
            err,
            Error::Parse(ParseError::TruncatedData { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn malformed_headers() {
        for bad in [&b"P2\n1 1\n255\n\x00"[..], b"P5\n1\n", b"P5\n1 1\n70000\n\x00\x00"] {
            let err = decode_pgm(bad, ImageFormat::Pgm8).unwrap_err();
            assert!(matches!(err, Error::Parse(ParseError::MalformedHeader(_))), "{err}");
        }
        let err = decode_pgm(b"P5\n1 1\n65535\n\x00\x01", ImageFormat::Pgm8).unwrap_err();
        assert!(matches!(err, Error::Parse(ParseError::MalformedHeader(_))));
    }

    #[test]
    fn sixteen_bit_is_big_endian() {
        let img = decode_pgm(b"P5\n2 1\n65535\n\x01\x00\xff\xff", ImageFormat::Pgm16).unwrap();
        assert_eq!(img.data(), &[256.0, 65535.0]);
        assert_eq!(img.range().hi, 65535.0);
        let back = encode_pgm(&img, ImageFormat::Pgm16).unwrap();
        assert_eq!(&back[back.len() - 4..], b"\x01\x00\xff\xff");
    }

    #[test]
    fn pgm8_overflow_is_rejected() {
        let img = Image::new(1, 1, vec![255.4], Interval::new(0.0, 300.0).unwrap()).unwrap();
        assert!(matches!(
            encode_pgm(&img, ImageFormat::Pgm8),
            Err(Error::RangeOverflow { .. })
        ));
    }

    #[test]
    fn file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let pgm = dir.path().join("a.pgm");
        let img = Image::new(3, 2, vec![0.0, 1.0, 2.0, 128.0, 254.0, 255.0], Interval::new(0.0, 255.0).unwrap())
            .unwrap();
        save_image(&img, &pgm, ImageFormat::Pgm8).unwrap();
        assert_eq!(load_image(&pgm, ImageFormat::Pgm8).unwrap(), img);
        assert_eq!(load_auto(&pgm).unwrap(), img);

        let raw = dir.path().join("b.f32");
        let img = Image::new(2, 2, vec![-1.0, -0.25, 0.5, 1.0], Interval::symmetric_unit()).unwrap();
        save_image(&img, &raw, ImageFormat::RawF32).unwrap();
        let back = load_image(&raw, ImageFormat::RawF32).unwrap();
        assert_eq!(back, img);
        assert!(!dir.path().join("b.f32.tmp").exists());
    }

    #[test]
    fn raw_needs_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("c.f32");
        fs::write(&raw, [0u8; 16]).unwrap();
        assert!(matches!(
            load_image(&raw, ImageFormat::RawF32),
            Err(Error::Parse(ParseError::MissingSidecar(_)))
        ));
        fs::write(sidecar_path(&raw), r#"{"width":2,"height":2,"lo":-1.0}"#).unwrap();
        assert!(matches!(
            load_image(&raw, ImageFormat::RawF32),
            Err(Error::Parse(ParseError::InvalidSidecar(_)))
        ));
        fs::write(sidecar_path(&raw), r#"{"width":3,"height":2,"lo":-1.0,"hi":1.0}"#).unwrap();
        assert!(matches!(
            load_image(&raw, ImageFormat::RawF32),
            Err(Error::Parse(ParseError::TruncatedData { .. }))
        ));
    }

    #[test]
    fn raw_keeps_values_inside_range() {
        let hi = 0.1f64;
        let img = Image::new(1, 1, vec![hi], Interval::new(0.0, hi).unwrap()).unwrap();
        let f = to_f32_inside(hi, img.range());
        assert!(f as f64 <= hi);
    }
}
