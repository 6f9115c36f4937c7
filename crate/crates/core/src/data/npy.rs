//! Minimal NPY v1.0 reader/writer for 2-D little-endian float arrays.
//!
//! Layout: `\x93NUMPY`, version bytes `1 0`, little-endian `u16` header length,
//! then a Python dict literal padded with spaces and terminated by `\n` so that
//! the data starts on a 64-byte boundary.

use std::io::{Read, Write};

use crate::error::{LfaError, Result};
use crate::linalg::Mat;
use crate::scalar::Real;

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
}

impl Dtype {
    pub fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }
}

pub fn header_bytes(dtype: Dtype, rows: usize, cols: usize) -> Vec<u8> {
    let dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': ({}, {}), }}",
        dtype.descr(),
        rows,
        cols
    );
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    let header_len = dict.len() + pad + 1;
    let mut out = Vec::with_capacity(unpadded + pad);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat_n(b' ', pad));
    out.push(b'\n');
    out
}

/// Serializes `m` in C order with the given element type.
pub fn write_npy<T: Real>(m: &Mat<T>, dtype: Dtype, mut out: impl Write) -> std::io::Result<()> {
    out.write_all(&header_bytes(dtype, m.rows(), m.cols()))?;
    let mut buf = Vec::with_capacity(m.as_slice().len() * dtype.size());
    for &v in m.as_slice() {
        match dtype {
            Dtype::F4 => buf.extend_from_slice(&(v.f64() as f32).to_le_bytes()),
            Dtype::F8 => buf.extend_from_slice(&v.f64().to_le_bytes()),
        }
    }
    out.write_all(&buf)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NpyHeader {
    pub dtype: Dtype,
    pub rows: usize,
    pub cols: usize,
}

fn dict_value<'a>(dict: &'a str, key: &str) -> Result<&'a str> {
    let pat = format!("'{key}':");
    let start = dict
        .find(&pat)
        .ok_or_else(|| LfaError::HeaderParse(format!("missing key `{key}`")))?
        + pat.len();
    Ok(dict[start..].trim_start())
}

pub fn parse_header(dict: &str) -> Result<NpyHeader> {
    let dict = dict.trim_end_matches(['\n', ' ', '\0']);
    if !(dict.starts_with('{') && dict.ends_with('}')) {
        return Err(LfaError::HeaderParse("header is not a dict literal".into()));
    }
    let descr = dict_value(dict, "descr")?;
    let dtype = if descr.starts_with("'<f4'") {
        Dtype::F4
    } else if descr.starts_with("'<f8'") {
        Dtype::F8
    } else {
        return Err(LfaError::HeaderParse(format!(
            "unsupported descr {}",
            descr.split(',').next().unwrap_or("")
        )));
    };
    let fortran = dict_value(dict, "fortran_order")?;
    if fortran.starts_with("True") {
        return Err(LfaError::HeaderParse("fortran_order arrays are not supported".into()));
    } else if !fortran.starts_with("False") {
        return Err(LfaError::HeaderParse("bad fortran_order value".into()));
    }
    let shape = dict_value(dict, "shape")?;
    let inner = shape
        .strip_prefix('(')
        .and_then(|s| s.split(')').next())
        .ok_or_else(|| LfaError::HeaderParse("bad shape tuple".into()))?;
    let dims: Vec<usize> = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| LfaError::HeaderParse(format!("bad dimension `{s}`"))))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(LfaError::HeaderParse(format!("expected a 2-D array, got {} dims", dims.len())));
    }
    Ok(NpyHeader {
        dtype,
        rows: dims[0],
        cols: dims[1],
    })
}

/// Reads a 2-D `<f4`/`<f8` array, widening to `T`.
pub fn read_npy<T: Real>(mut input: impl Read) -> Result<(Mat<T>, Dtype)> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| LfaError::HeaderParse(format!("read failed: {e}")))?;
    decode_npy(&bytes)
}

pub fn decode_npy<T: Real>(bytes: &[u8]) -> Result<(Mat<T>, Dtype)> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(LfaError::BadMagic);
    }
    if bytes.len() < 10 {
        return Err(LfaError::HeaderParse("truncated preamble".into()));
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(LfaError::HeaderParse(format!(
            "unsupported version {}.{}",
            bytes[6], bytes[7]
        )));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = 10 + header_len;
    if bytes.len() < data_start {
        return Err(LfaError::HeaderParse("truncated header".into()));
    }
    let dict = std::str::from_utf8(&bytes[10..data_start])
        .map_err(|_| LfaError::HeaderParse("header is not ASCII".into()))?;
    let header = parse_header(dict)?;
    let count = header.rows * header.cols;
    let payload = &bytes[data_start..];
    let expected = count * header.dtype.size();
    if payload.len() != expected {
        return Err(LfaError::ShapeMismatch(format!(
            "shape ({}, {}) needs {expected} payload bytes, found {}",
            header.rows,
            header.cols,
            payload.len()
        )));
    }
    let data: Vec<T> = match header.dtype {
        Dtype::F4 => payload
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect(),
        Dtype::F8 => payload
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect(),
    };
    Ok((Mat::from_vec(header.rows, header.cols, data)?, header.dtype))
}
