//! Minimal reader/writer for the numpy `.npy` format.
//!
//! Only little-endian `f4`, `f8`, `u1` and `i4` payloads in C order are
//! handled. Files are always written as version 1.0 with the header padded
//! to a 64-byte boundary, which is byte-identical to what `numpy.save`
//! produces for the same array.
//!
//! Format reference: <https://numpy.org/doc/stable/reference/generated/numpy.lib.format.html>

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

/// Element type of an npy payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Descr {
    F32,
    F64,
    U8,
    I32,
}

impl Descr {
    pub fn as_str(self) -> &'static str {
        match self {
            Descr::F32 => "<f4",
            Descr::F64 => "<f8",
            Descr::U8 => "|u1",
            Descr::I32 => "<i4",
        }
    }

    pub fn item_size(self) -> usize {
        match self {
            Descr::F32 | Descr::I32 => 4,
            Descr::F64 => 8,
            Descr::U8 => 1,
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "<f4" => Ok(Descr::F32),
            "<f8" => Ok(Descr::F64),
            "|u1" | "<u1" | ">u1" | "u1" => Ok(Descr::U8),
            "<i4" => Ok(Descr::I32),
            other => Err(Error::Unsupported(format!("npy dtype {other:?}"))),
        }
    }
}

/// Decoded npy header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub descr: Descr,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
}

impl Header {
    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// Serializes magic, version, length field and the padded dict.
    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = match self.shape.len() {
            0 => "()".to_string(),
            1 => format!("({},)", self.shape[0]),
            _ => {
                let dims: Vec<String> = self.shape.iter().map(|d| d.to_string()).collect();
                format!("({})", dims.join(", "))
            }
        };
        let mut dict = format!(
            "{{'descr': '{}', 'fortran_order': {}, 'shape': {}, }}",
            self.descr.as_str(),
            if self.fortran_order { "True" } else { "False" },
            shape
        );
        // magic(6) + version(2) + len(2) + dict + '\n' must be a multiple of ALIGN
        let unpadded = MAGIC.len() + 4 + dict.len() + 1;
        let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
        dict.extend(std::iter::repeat_n(' ', pad));
        dict.push('\n');

        let mut out = Vec::with_capacity(MAGIC.len() + 4 + dict.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
        out.extend_from_slice(dict.as_bytes());
        out
    }

    /// Parses a header from the start of `bytes`, returning it with the payload offset.
    pub fn parse(bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Format("missing npy magic".into()));
        }
        let (major, minor) = (bytes[6], bytes[7]);
        let (len, start) = match major {
            1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
            2 | 3 => {
                if bytes.len() < 12 {
                    return Err(Error::Format("truncated npy header".into()));
                }
                (
                    u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                    12,
                )
            }
            _ => {
                return Err(Error::Unsupported(format!(
                    "npy version {major}.{minor}"
                )))
            }
        };
        let end = start + len;
        if bytes.len() < end {
            return Err(Error::Format("truncated npy header".into()));
        }
        let text = std::str::from_utf8(&bytes[start..end])
            .map_err(|_| Error::Format("npy header is not valid text".into()))?;
        Ok((parse_dict(text)?, end))
    }
}

/// Raw payload of an npy file, already decoded from little-endian bytes.
#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
    I32(Vec<i32>),
}

impl NpyData {
    pub fn descr(&self) -> Descr {
        match self {
            NpyData::F32(_) => Descr::F32,
            NpyData::F64(_) => Descr::F64,
            NpyData::U8(_) => Descr::U8,
            NpyData::I32(_) => Descr::I32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            NpyData::F32(v) => v.len(),
            NpyData::F64(v) => v.len(),
            NpyData::U8(v) => v.len(),
            NpyData::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            NpyData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            NpyData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            NpyData::U8(v) => out.extend_from_slice(v),
            NpyData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }

    fn read_le(descr: Descr, bytes: &[u8]) -> Self {
        match descr {
            Descr::F32 => NpyData::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Descr::F64 => NpyData::F64(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Descr::U8 => NpyData::U8(bytes.to_vec()),
            Descr::I32 => NpyData::I32(
                bytes
                    .chunks_exact(4)
                    .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        }
    }
}

/// Encodes a full npy file in memory.
pub fn encode(shape: &[usize], data: &NpyData) -> Result<Vec<u8>> {
    let count: usize = shape.iter().product();
    if count != data.len() {
        return Err(Error::Shape(format!(
            "shape {shape:?} holds {count} elements but data has {}",
            data.len()
        )));
    }
    let header = Header {
        descr: data.descr(),
        fortran_order: false,
        shape: shape.to_vec(),
    };
    let mut out = header.to_bytes();
    out.reserve(count * data.descr().item_size());
    data.write_le(&mut out);
    Ok(out)
}

/// Decodes a full npy file from memory. Fortran-ordered arrays are rejected.
pub fn decode(bytes: &[u8]) -> Result<(Vec<usize>, NpyData)> {
    let (header, offset) = Header::parse(bytes)?;
    if header.fortran_order {
        return Err(Error::Unsupported("Fortran-ordered npy arrays".into()));
    }
    let expected = header
        .element_count()
        .checked_mul(header.descr.item_size())
        .ok_or_else(|| Error::Format("npy shape overflows".into()))?;
    let payload = &bytes[offset..];
    if payload.len() < expected {
        return Err(Error::Format(format!(
            "truncated npy payload: expected {expected} bytes, found {}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "npy payload has {} trailing bytes",
            payload.len() - expected
        )));
    }
    Ok((header.shape, NpyData::read_le(header.descr, payload)))
}

pub fn read(path: &Path) -> Result<(Vec<usize>, NpyData)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write(path: &Path, shape: &[usize], data: &NpyData) -> Result<()> {
    let bytes = encode(shape, data)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

// The header is a Python dict literal. Only the three keys numpy writes are
// accepted; values are a quoted string, a bool, or a tuple of integers.
fn parse_dict(text: &str) -> Result<Header> {
    let bad = |msg: &str| Error::Format(format!("npy header: {msg}"));
    let body = text.trim_end_matches(['\n', ' ', '\0']).trim();
    let body = body
        .strip_prefix('{')
        .and_then(|b| b.strip_suffix('}'))
        .ok_or_else(|| bad("not a dict"))?;

    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    let mut rest = body.trim_start();
    while !rest.is_empty() {
        let (key, after) = take_quoted(rest).ok_or_else(|| bad("expected quoted key"))?;
        let after = after
            .trim_start()
            .strip_prefix(':')
            .ok_or_else(|| bad("expected ':'"))?
            .trim_start();
        let after = match key {
            "descr" => {
                let (v, a) = take_quoted(after).ok_or_else(|| bad("descr must be a string"))?;
                descr = Some(Descr::parse(v)?);
                a
            }
            "fortran_order" => {
                if let Some(a) = after.strip_prefix("True") {
                    fortran = Some(true);
                    a
                } else if let Some(a) = after.strip_prefix("False") {
                    fortran = Some(false);
                    a
                } else {
                    return Err(bad("fortran_order must be True or False"));
                }
            }
            "shape" => {
                let inner = after.strip_prefix('(').ok_or_else(|| bad("shape must be a tuple"))?;
                let close = inner.find(')').ok_or_else(|| bad("unterminated shape"))?;
                let dims = inner[..close]
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.trim_end_matches('L')
                            .parse::<usize>()
                            .map_err(|_| bad("shape entries must be integers"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                shape = Some(dims);
                &inner[close + 1..]
            }
            other => return Err(bad(&format!("unexpected key {other:?}"))),
        };
        rest = after.trim_start();
        rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
    }
    Ok(Header {
        descr: descr.ok_or_else(|| bad("missing descr"))?,
        fortran_order: fortran.ok_or_else(|| bad("missing fortran_order"))?,
        shape: shape.ok_or_else(|| bad("missing shape"))?,
    })
}

fn take_quoted(s: &str) -> Option<(&str, &str)> {
    let quote = s.chars().next().filter(|c| *c == '\'' || *c == '"')?;
    let inner = &s[1..];
    let end = inner.find(quote)?;
    Some((&inner[..end], &inner[end + 1..]))
}
