//! Minimal binary container: magic + version + JSON header + named arrays.
//!
//! Little-endian throughout. Byte layout is documented in docs/FORMATS.md and
//! shared by the dataset and checkpoint files.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U32(Vec<u32>),
}

impl ArrayData {
    fn dtype_tag(&self) -> u8 {
        match self {
            ArrayData::F32(_) => 1,
            ArrayData::U32(_) => 2,
            ArrayData::F64(_) => 3,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
            ArrayData::U32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub dims: Vec<u32>,
    pub data: ArrayData,
}

impl NamedArray {
    pub fn f32(dims: Vec<u32>, data: Vec<f32>) -> Self {
        debug_assert_eq!(dims.iter().product::<u32>() as usize, data.len());
        NamedArray {
            dims,
            data: ArrayData::F32(data),
        }
    }

    pub fn f64(dims: Vec<u32>, data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<u32>() as usize, data.len());
        NamedArray {
            dims,
            data: ArrayData::F64(data),
        }
    }

    pub fn u32(dims: Vec<u32>, data: Vec<u32>) -> Self {
        debug_assert_eq!(dims.iter().product::<u32>() as usize, data.len());
        NamedArray {
            dims,
            data: ArrayData::U32(data),
        }
    }

    pub fn as_f32(&self) -> Result<&[f32]> {
        match &self.data {
            ArrayData::F32(v) => Ok(v),
            _ => Err(Error::Format("expected f32 array".into())),
        }
    }

    pub fn as_f64(&self) -> Result<&[f64]> {
        match &self.data {
            ArrayData::F64(v) => Ok(v),
            _ => Err(Error::Format("expected f64 array".into())),
        }
    }

    pub fn as_u32(&self) -> Result<&[u32]> {
        match &self.data {
            ArrayData::U32(v) => Ok(v),
            _ => Err(Error::Format("expected u32 array".into())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Container {
    pub header_json: String,
    pub arrays: BTreeMap<String, NamedArray>,
}

pub fn write_container(
    path: &Path,
    magic: &[u8; 8],
    version: u32,
    container: &Container,
) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&version.to_le_bytes());
    let header = container.header_json.as_bytes();
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(header);
    buf.extend_from_slice(&(container.arrays.len() as u32).to_le_bytes());
    for (name, arr) in &container.arrays {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.push(arr.data.dtype_tag());
        buf.push(arr.dims.len() as u8);
        for &d in &arr.dims {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        match &arr.data {
            ArrayData::F32(v) => {
                for x in v {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
            ArrayData::F64(v) => {
                for x in v {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
            ArrayData::U32(v) => {
                for x in v {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_container(path: &Path, magic: &[u8; 8], expect_version: u32) -> Result<Container> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };

    let got_magic = cur.take(8)?;
    if got_magic != magic {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}",
            path.display(),
            got_magic
        )));
    }
    let version = cur.u32()?;
    if version != expect_version {
        return Err(Error::Format(format!(
            "{}: unsupported format_version {} (expected {})",
            path.display(),
            version,
            expect_version
        )));
    }
    let header_len = cur.u32()? as usize;
    let header_json = String::from_utf8(cur.take(header_len)?.to_vec())
        .map_err(|e| Error::Format(format!("header not UTF-8: {e}")))?;
    let n_arrays = cur.u32()? as usize;
    let mut arrays = BTreeMap::new();
    for _ in 0..n_arrays {
        let name_len = cur.u16()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|e| Error::Format(format!("array name not UTF-8: {e}")))?;
        let dtype = cur.u8()?;
        let ndim = cur.u8()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(cur.u32()?);
        }
        let count = dims.iter().product::<u32>() as usize;
        let data = match dtype {
            1 => {
                let raw = cur.take(count * 4)?;
                ArrayData::F32(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                )
            }
            2 => {
                let raw = cur.take(count * 4)?;
                ArrayData::U32(
                    raw.chunks_exact(4)
                        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                )
            }
            3 => {
                let raw = cur.take(count * 8)?;
                ArrayData::F64(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                )
            }
            other => {
                return Err(Error::Format(format!("unknown dtype tag {other}")));
            }
        };
        arrays.insert(name, NamedArray { dims, data });
    }
    Ok(Container { header_json, arrays })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("truncated file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
