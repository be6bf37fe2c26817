//! PGM (P2/P5) and PPM (P3/P6) reading and writing.
//!
//! Pixel values are kept exactly as stored; a file with maxval below 255 is
//! not rescaled. Frames are always written in binary form with maxval 255.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::geometry::{Frame, Mask};

#[derive(Debug, Error)]
pub enum NetpbmError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("unsupported maxval {0} (at most 255)")]
    UnsupportedMaxval(u32),
    #[error("sample value {value} exceeds maxval {maxval}")]
    ValueOutOfRange { value: u32, maxval: u32 },
}

impl NetpbmError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Next unsigned decimal token, or `None` at end of input.
    fn token(&mut self) -> Result<Option<u32>, NetpbmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return match self.bytes.get(self.pos) {
                None => Ok(None),
                Some(&b) => Err(NetpbmError::MalformedHeader(format!("unexpected byte 0x{b:02x} at offset {start}"))),
            };
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("digits are ascii");
        text.parse()
            .map(Some)
            .map_err(|_| NetpbmError::MalformedHeader(format!("number out of range at offset {start}")))
    }

    fn header_field(&mut self, name: &str) -> Result<u32, NetpbmError> {
        self.token()?.ok_or_else(|| NetpbmError::MalformedHeader(format!("missing {name}")))
    }
}

/// Decodes a netpbm image held in memory.
pub fn parse_frame(bytes: &[u8]) -> Result<Frame, NetpbmError> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(NetpbmError::MalformedHeader("missing 'P' magic".into()));
    }
    let (channels, binary) = match bytes[1] {
        b'2' => (1, false),
        b'3' => (3, false),
        b'5' => (1, true),
        b'6' => (3, true),
        other => {
            return Err(NetpbmError::MalformedHeader(format!("unsupported magic P{}", other as char)));
        }
    };
    let mut cur = Cursor { bytes, pos: 2 };
    if !cur.bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(NetpbmError::MalformedHeader("magic must be followed by whitespace".into()));
    }
    let width = cur.header_field("width")? as usize;
    let height = cur.header_field("height")? as usize;
    let maxval = cur.header_field("maxval")?;
    if width == 0 || height == 0 {
        return Err(NetpbmError::MalformedHeader(format!("empty image {width}x{height}")));
    }
    if maxval == 0 {
        return Err(NetpbmError::MalformedHeader("maxval must be positive".into()));
    }
    if maxval > 255 {
        return Err(NetpbmError::UnsupportedMaxval(maxval));
    }
    let expected = width * height * channels;

    let pixels = if binary {
        // exactly one whitespace byte separates the header from the raster
        if !cur.bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(NetpbmError::MalformedHeader("missing separator after maxval".into()));
        }
        let raster = &bytes[cur.pos + 1..];
        if raster.len() < expected {
            return Err(NetpbmError::Truncated { expected, found: raster.len() });
        }
        let pixels = raster[..expected].to_vec();
        if let Some(&v) = pixels.iter().find(|&&v| u32::from(v) > maxval) {
            return Err(NetpbmError::ValueOutOfRange { value: v.into(), maxval });
        }
        pixels
    } else {
        let mut pixels = Vec::with_capacity(expected);
        while pixels.len() < expected {
            match cur.token()? {
                Some(v) if v > maxval => return Err(NetpbmError::ValueOutOfRange { value: v, maxval }),
                Some(v) => pixels.push(v as u8),
                None => return Err(NetpbmError::Truncated { expected, found: pixels.len() }),
            }
        }
        pixels
    };
    Ok(Frame::new(width, height, channels, pixels, 0).expect("dimensions checked above"))
}

pub fn read_frame(path: &Path) -> Result<Frame, NetpbmError> {
    let bytes = fs::read(path).map_err(|e| NetpbmError::io(path, e))?;
    parse_frame(&bytes)
}

/// Canonical binary encoding: P5 for one channel, P6 for three.
pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let magic = if frame.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.pixels());
    out
}

pub fn write_frame(frame: &Frame, path: &Path) -> Result<(), NetpbmError> {
    let mut file = fs::File::create(path).map_err(|e| NetpbmError::io(path, e))?;
    file.write_all(&encode_frame(frame)).map_err(|e| NetpbmError::io(path, e))
}

/// Writes a mask as a binary PGM with foreground at 255.
pub fn write_mask(mask: &Mask, path: &Path) -> Result<(), NetpbmError> {
    write_frame(&mask.to_frame(0), path)
}
