//! Minimal NPY v1.0 container support.
//!
//! Arrays are stored little-endian in C order with the classic layout:
//! magic `\x93NUMPY`, version (1, 0), u16 header length, then a Python
//! dict literal `{'descr': ..., 'fortran_order': False, 'shape': (...), }`
//! space-padded so the data section starts on a 64-byte boundary.
//! Fortran-order files are rejected. Writes go through a temp file and an
//! atomic rename so interrupted runs never leave a truncated array behind.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{CliError, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const HEADER_ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    U8,
    I32,
    I64,
    F32,
    F64,
}

impl Dtype {
    pub fn descr(self) -> &'static str {
        match self {
            Dtype::U8 => "|u1",
            Dtype::I32 => "<i4",
            Dtype::I64 => "<i8",
            Dtype::F32 => "<f4",
            Dtype::F64 => "<f8",
        }
    }

    fn from_descr(s: &str) -> Option<Self> {
        match s {
            "|u1" | "<u1" | "u1" => Some(Dtype::U8),
            "<i4" => Some(Dtype::I32),
            "<i8" => Some(Dtype::I64),
            "<f4" => Some(Dtype::F32),
            "<f8" => Some(Dtype::F64),
            _ => None,
        }
    }

    fn item_size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::I32 | Dtype::F32 => 4,
            Dtype::I64 | Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    U8(Vec<u8>),
    I32(Vec<i32>),
    I64(Vec<i64>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl NpyData {
    pub fn len(&self) -> usize {
        match self {
            NpyData::U8(v) => v.len(),
            NpyData::I32(v) => v.len(),
            NpyData::I64(v) => v.len(),
            NpyData::F32(v) => v.len(),
            NpyData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            NpyData::U8(_) => Dtype::U8,
            NpyData::I32(_) => Dtype::I32,
            NpyData::I64(_) => Dtype::I64,
            NpyData::F32(_) => Dtype::F32,
            NpyData::F64(_) => Dtype::F64,
        }
    }
}

/// A dense array with shape, as stored in an `.npy` file.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn new(shape: Vec<usize>, data: NpyData) -> std::result::Result<Self, String> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(format!(
                "shape {:?} implies {} elements, data has {}",
                shape,
                expected,
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }
}

fn header_string(dtype: Dtype, shape: &[usize]) -> String {
    let shape_str = match shape.len() {
        0 => "()".to_string(),
        1 => format!("({},)", shape[0]),
        _ => format!(
            "({})",
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        dtype.descr(),
        shape_str
    )
}

/// Serialize to the canonical byte layout.
pub fn to_bytes(array: &NpyArray) -> Vec<u8> {
    let mut header = header_string(array.data.dtype(), &array.shape).into_bytes();
    // pad with spaces so that 10 + header_len is a multiple of 64, ending '\n'
    let unpadded = MAGIC.len() + 2 + 2 + header.len() + 1;
    let pad = (HEADER_ALIGN - unpadded % HEADER_ALIGN) % HEADER_ALIGN;
    header.extend(std::iter::repeat_n(b' ', pad));
    header.push(b'\n');

    let mut out = Vec::with_capacity(10 + header.len() + array.data.len() * 8);
    out.extend_from_slice(MAGIC);
    out.push(1);
    out.push(0);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(&header);
    match &array.data {
        NpyData::U8(v) => out.extend_from_slice(v),
        NpyData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        NpyData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        NpyData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        NpyData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

/// Write atomically (temp file + rename).
pub fn write_npy(path: &Path, array: &NpyArray) -> Result<()> {
    let bytes = to_bytes(array);
    let tmp = path.with_extension("npy.tmp");
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
    }
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))?;
    Ok(())
}

pub fn read_npy(path: &Path) -> Result<NpyArray> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CliError::io(path, e))?;
    from_bytes(&bytes, path)
}

pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<NpyArray> {
    let fail = |field: &'static str, msg: String| CliError::format(path, field, msg);
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(fail("magic", "not an NPY file (bad magic bytes)".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(fail(
            "version",
            format!("unsupported NPY version {major}.{minor}, expected 1.0"),
        ));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    if bytes.len() < 10 + header_len {
        return Err(fail("header", "truncated header".into()));
    }
    let header = std::str::from_utf8(&bytes[10..10 + header_len])
        .map_err(|_| fail("header", "header is not valid UTF-8".into()))?;

    let descr = dict_value(header, "descr")
        .ok_or_else(|| fail("descr", "missing 'descr' key".into()))?;
    let descr = descr.trim().trim_matches(|c| c == '\'' || c == '"');
    let dtype = Dtype::from_descr(descr)
        .ok_or_else(|| fail("descr", format!("unsupported dtype '{descr}'")))?;

    let fortran = dict_value(header, "fortran_order")
        .ok_or_else(|| fail("fortran_order", "missing 'fortran_order' key".into()))?;
    match fortran.trim() {
        "False" => {}
        "True" => {
            return Err(fail(
                "fortran_order",
                "Fortran-order arrays are not supported; re-export in C order".into(),
            ))
        }
        other => {
            return Err(fail(
                "fortran_order",
                format!("expected True or False, got '{other}'"),
            ))
        }
    }

    let shape_str = dict_value(header, "shape")
        .ok_or_else(|| fail("shape", "missing 'shape' key".into()))?;
    let shape = parse_shape(&shape_str)
        .map_err(|msg| fail("shape", msg))?;

    let n_items: usize = shape.iter().product();
    let payload = &bytes[10 + header_len..];
    let expected_bytes = n_items * dtype.item_size();
    if payload.len() != expected_bytes {
        return Err(fail(
            "data",
            format!(
                "shape {:?} needs {} payload bytes, file has {}",
                shape,
                expected_bytes,
                payload.len()
            ),
        ));
    }
    let data = match dtype {
        Dtype::U8 => NpyData::U8(payload.to_vec()),
        Dtype::I32 => NpyData::I32(
            payload
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
        Dtype::I64 => NpyData::I64(
            payload
                .chunks_exact(8)
                .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::F32 => NpyData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
        Dtype::F64 => NpyData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    Ok(NpyArray { shape, data })
}

/// Value of `key` in the header dict literal (top-level commas only).
fn dict_value(header: &str, key: &str) -> Option<String> {
    let inner = header.trim().trim_start_matches('{').trim_end_matches(|c: char| {
        c == '}' || c.is_whitespace()
    });
    let mut depth = 0i32;
    let mut entries = Vec::new();
    let mut cur = String::new();
    for ch in inner.chars() {
        match ch {
            '(' | '[' => {
                depth += 1;
                cur.push(ch);
            }
            ')' | ']' => {
                depth -= 1;
                cur.push(ch);
            }
            ',' if depth == 0 => {
                entries.push(cur.clone());
                cur.clear();
            }
            _ => cur.push(ch),
        }
    }
    if !cur.trim().is_empty() {
        entries.push(cur);
    }
    for entry in entries {
        if let Some((k, v)) = entry.split_once(':') {
            if k.trim().trim_matches(|c| c == '\'' || c == '"') == key {
                return Some(v.trim().to_string());
            }
        }
    }
    None
}

fn parse_shape(s: &str) -> std::result::Result<Vec<usize>, String> {
    let inner = s
        .trim()
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| format!("shape '{s}' is not a tuple"))?;
    let mut dims = Vec::new();
    for part in inner.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        dims.push(
            part.parse::<usize>()
                .map_err(|_| format!("bad shape dimension '{part}'"))?,
        );
    }
    Ok(dims)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_every_dtype() {
        let dir = tempfile::tempdir().unwrap();
        let arrays = vec![
            NpyArray::new(vec![2, 3], NpyData::U8(vec![0, 1, 2, 3, 4, 5])).unwrap(),
            NpyArray::new(vec![4], NpyData::I32(vec![-1, 0, 7, i32::MAX])).unwrap(),
            NpyArray::new(vec![2], NpyData::I64(vec![i64::MIN, 42])).unwrap(),
            NpyArray::new(vec![1, 2, 2], NpyData::F32(vec![0.5, -1.25, 3.75, 0.0])).unwrap(),
            NpyArray::new(vec![3], NpyData::F64(vec![1.0, f64::MIN_POSITIVE, -2.5])).unwrap(),
        ];
        for (i, a) in arrays.iter().enumerate() {
            let path = dir.path().join(format!("a{i}.npy"));
            write_npy(&path, a).unwrap();
            let back = read_npy(&path).unwrap();
            assert_eq!(&back, a);
        }
    }

    #[test]
    fn zero_length_arrays_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = NpyArray::new(vec![0, 4, 4], NpyData::U8(vec![])).unwrap();
        let path = dir.path().join("empty.npy");
        write_npy(&path, &a).unwrap();
        assert_eq!(read_npy(&path).unwrap(), a);
    }

    #[test]
    fn fixed_byte_layout_for_2x3_f32_zeros() {
        // hand-assembled reference: 10-byte preamble + 118-byte header
        // (59 chars of dict text, 58 space pads, '\n'), then 24 zero bytes;
        // data starts on the 128-byte boundary
        let a = NpyArray::new(vec![2, 3], NpyData::F32(vec![0.0; 6])).unwrap();
        let bytes = to_bytes(&a);
        let mut expected = Vec::new();
        expected.extend_from_slice(b"\x93NUMPY");
        expected.push(1);
        expected.push(0);
        expected.extend_from_slice(&118u16.to_le_bytes());
        let text = "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }";
        assert_eq!(text.len(), 59);
        expected.extend_from_slice(text.as_bytes());
        expected.extend(std::iter::repeat(b' ').take(58));
        expected.push(b'\n');
        expected.extend_from_slice(&[0u8; 24]);
        assert_eq!(bytes, expected);
        // byte-reproducible: serializing twice gives identical bytes
        assert_eq!(bytes, to_bytes(&a));
        assert_eq!(bytes.len(), 152);
    }

    #[test]
    fn one_dimensional_shape_uses_trailing_comma() {
        let a = NpyArray::new(vec![5], NpyData::U8(vec![1; 5])).unwrap();
        let bytes = to_bytes(&a);
        let header = std::str::from_utf8(&bytes[10..bytes.len() - 5]).unwrap();
        assert!(header.contains("'shape': (5,)"));
        let back = from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back.shape, vec![5]);
    }

    #[test]
    fn rejects_bad_magic() {
        let err = from_bytes(b"NOTNPY....", Path::new("x.npy")).unwrap_err();
        assert_eq!(err.code(), "format");
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn rejects_unsupported_version() {
        let a = NpyArray::new(vec![1], NpyData::U8(vec![9])).unwrap();
        let mut bytes = to_bytes(&a);
        bytes[6] = 2;
        let err = from_bytes(&bytes, Path::new("x.npy")).unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    /// Assemble a raw file with an arbitrary header dict.
    fn make_file(header: &str, payload: &[u8]) -> Vec<u8> {
        let mut h = header.as_bytes().to_vec();
        h.push(b'\n');
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.push(1);
        bytes.push(0);
        bytes.extend_from_slice(&(h.len() as u16).to_le_bytes());
        bytes.extend_from_slice(&h);
        bytes.extend_from_slice(payload);
        bytes
    }

    #[test]
    fn rejects_fortran_order() {
        let bytes = make_file(
            "{'descr': '<f4', 'fortran_order': True, 'shape': (2, 2), }",
            &[0u8; 16],
        );
        let err = from_bytes(&bytes, Path::new("x.npy")).unwrap_err();
        assert_eq!(err.code(), "format");
        assert!(err.to_string().contains("fortran_order"));
    }

    #[test]
    fn rejects_unknown_dtype() {
        let bytes = make_file(
            "{'descr': '<c16', 'fortran_order': False, 'shape': (1,), }",
            &[0u8; 16],
        );
        let err = from_bytes(&bytes, Path::new("x.npy")).unwrap_err();
        assert!(err.to_string().contains("descr") || err.to_string().contains("dtype"));
    }

    #[test]
    fn rejects_payload_size_mismatch() {
        let bytes = make_file(
            "{'descr': '<f4', 'fortran_order': False, 'shape': (3,), }",
            &[0u8; 8],
        );
        let err = from_bytes(&bytes, Path::new("x.npy")).unwrap_err();
        assert!(err.to_string().contains("payload"));
    }

    #[test]
    fn reads_numpy_written_header_with_reordered_spacing() {
        // tolerant parsing: extra spaces and swapped key order
        let payload = 1.0f64.to_le_bytes();
        let header = "{'shape': (1,),  'fortran_order': False, 'descr': '<f8'}";
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.push(1);
        bytes.push(0);
        let mut h = header.as_bytes().to_vec();
        let unpadded = 10 + h.len() + 1;
        h.extend(std::iter::repeat(b' ').take((64 - unpadded % 64) % 64));
        h.push(b'\n');
        bytes.extend_from_slice(&(h.len() as u16).to_le_bytes());
        bytes.extend_from_slice(&h);
        bytes.extend_from_slice(&payload);
        let a = from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(a.shape, vec![1]);
        assert_eq!(a.data, NpyData::F64(vec![1.0]));
    }
}
