//! The `FWB1` binary container.
//!
//! A file is the magic `FWB1` followed by chunks until end of file. Each chunk
//! is laid out as
//!
//! ```text
//! u16 name_len | name (UTF-8) | u8 dtype | u8 rank | u64 dims[rank] | payload
//! ```
//!
//! with every integer and every payload element little-endian. Dtype codes are
//! 1 = f64, 2 = f32, 3 = u32, 4 = u8. Text is stored as a rank-1 u8 chunk.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FWB1";

#[derive(Debug, Clone, PartialEq)]
pub enum ChunkData {
    F64(Vec<f64>),
    F32(Vec<f32>),
    U32(Vec<u32>),
    U8(Vec<u8>),
}

impl ChunkData {
    fn code(&self) -> u8 {
        match self {
            ChunkData::F64(_) => 1,
            ChunkData::F32(_) => 2,
            ChunkData::U32(_) => 3,
            ChunkData::U8(_) => 4,
        }
    }

    fn len(&self) -> usize {
        match self {
            ChunkData::F64(v) => v.len(),
            ChunkData::F32(v) => v.len(),
            ChunkData::U32(v) => v.len(),
            ChunkData::U8(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: ChunkData,
}

/// Ordered collection of named arrays. Chunk order is preserved on write so
/// that files are byte-for-byte reproducible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    chunks: Vec<Chunk>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn contains(&self, name: &str) -> bool {
        self.chunks.iter().any(|c| c.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Chunk> {
        self.chunks.iter().find(|c| c.name == name)
    }

    /// Inserts a chunk, replacing any existing chunk of the same name in place.
    pub fn insert(&mut self, name: &str, dims: &[usize], data: ChunkData) -> Result<()> {
        if name.len() > u16::MAX as usize {
            return Err(Error::Container(format!("chunk name too long: {}", name.len())));
        }
        if dims.len() > u8::MAX as usize {
            return Err(Error::Container(format!("rank {} too large", dims.len())));
        }
        let count: usize = dims.iter().product();
        if count != data.len() {
            return Err(Error::Container(format!(
                "chunk `{name}`: dims {dims:?} hold {count} elements but payload has {}",
                data.len()
            )));
        }
        let chunk = Chunk {
            name: name.to_string(),
            dims: dims.iter().map(|&d| d as u64).collect(),
            data,
        };
        match self.chunks.iter_mut().find(|c| c.name == name) {
            Some(slot) => *slot = chunk,
            None => self.chunks.push(chunk),
        }
        Ok(())
    }

    pub fn put_f64(&mut self, name: &str, dims: &[usize], data: Vec<f64>) -> Result<()> {
        self.insert(name, dims, ChunkData::F64(data))
    }

    pub fn put_f32(&mut self, name: &str, dims: &[usize], data: Vec<f32>) -> Result<()> {
        self.insert(name, dims, ChunkData::F32(data))
    }

    pub fn put_u32(&mut self, name: &str, dims: &[usize], data: Vec<u32>) -> Result<()> {
        self.insert(name, dims, ChunkData::U32(data))
    }

    pub fn put_u8(&mut self, name: &str, dims: &[usize], data: Vec<u8>) -> Result<()> {
        self.insert(name, dims, ChunkData::U8(data))
    }

    pub fn put_text(&mut self, name: &str, text: &str) -> Result<()> {
        let bytes = text.as_bytes().to_vec();
        self.insert(name, &[bytes.len()], ChunkData::U8(bytes))
    }

    fn require(&self, name: &str) -> Result<&Chunk> {
        self.get(name).ok_or_else(|| Error::MissingChunk(name.to_string()))
    }

    pub fn f64(&self, name: &str) -> Result<(Vec<usize>, &[f64])> {
        let c = self.require(name)?;
        match &c.data {
            ChunkData::F64(v) => Ok((dims_usize(&c.dims), v)),
            _ => Err(Error::Container(format!("chunk `{name}` is not f64"))),
        }
    }

    pub fn f32(&self, name: &str) -> Result<(Vec<usize>, &[f32])> {
        let c = self.require(name)?;
        match &c.data {
            ChunkData::F32(v) => Ok((dims_usize(&c.dims), v)),
            _ => Err(Error::Container(format!("chunk `{name}` is not f32"))),
        }
    }

    pub fn u32(&self, name: &str) -> Result<(Vec<usize>, &[u32])> {
        let c = self.require(name)?;
        match &c.data {
            ChunkData::U32(v) => Ok((dims_usize(&c.dims), v)),
            _ => Err(Error::Container(format!("chunk `{name}` is not u32"))),
        }
    }

    pub fn u8(&self, name: &str) -> Result<(Vec<usize>, &[u8])> {
        let c = self.require(name)?;
        match &c.data {
            ChunkData::U8(v) => Ok((dims_usize(&c.dims), v)),
            _ => Err(Error::Container(format!("chunk `{name}` is not u8"))),
        }
    }

    pub fn text(&self, name: &str) -> Result<String> {
        let (_, bytes) = self.u8(name)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Container(format!("chunk `{name}` is not valid UTF-8")))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        for c in &self.chunks {
            w.write_all(&(c.name.len() as u16).to_le_bytes())?;
            w.write_all(c.name.as_bytes())?;
            w.write_all(&[c.data.code(), c.dims.len() as u8])?;
            for d in &c.dims {
                w.write_all(&d.to_le_bytes())?;
            }
            match &c.data {
                ChunkData::F64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                ChunkData::F32(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                ChunkData::U32(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                ChunkData::U8(v) => w.write_all(v)?,
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { buf: bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Container("bad magic, expected FWB1".into()));
        }
        let mut out = Container::new();
        while cur.pos < bytes.len() {
            let name_len = u16::from_le_bytes(cur.array()?) as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| Error::Container("chunk name is not UTF-8".into()))?
                .to_string();
            let [code, rank] = cur.array::<2>()?;
            let mut dims = Vec::with_capacity(rank as usize);
            for _ in 0..rank {
                dims.push(u64::from_le_bytes(cur.array()?) as usize);
            }
            let count = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Container(format!("chunk `{name}`: dims overflow")))?;
            let data = match code {
                1 => ChunkData::F64(
                    cur.elements(count, 8)?
                        .chunks_exact(8)
                        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                        .collect(),
                ),
                2 => ChunkData::F32(
                    cur.elements(count, 4)?
                        .chunks_exact(4)
                        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                        .collect(),
                ),
                3 => ChunkData::U32(
                    cur.elements(count, 4)?
                        .chunks_exact(4)
                        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                        .collect(),
                ),
                4 => ChunkData::U8(cur.elements(count, 1)?.to_vec()),
                other => {
                    return Err(Error::Container(format!(
                        "chunk `{name}`: unknown dtype code {other}"
                    )))
                }
            };
            out.insert(&name, &dims, data)?;
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn dims_usize(dims: &[u64]) -> Vec<usize> {
    dims.iter().map(|&d| d as usize).collect()
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Container(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn elements(&mut self, count: usize, width: usize) -> Result<&'a [u8]> {
        let n = count
            .checked_mul(width)
            .ok_or_else(|| Error::Container("payload size overflow".into()))?;
        self.take(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_exact() {
        let mut c = Container::new();
        c.put_u32("ab", &[2], vec![1, 0x01020304]).unwrap();
        let bytes = c.to_bytes();
        let expected: Vec<u8> = [
            &b"FWB1"[..],
            &[2, 0],
            b"ab",
            &[3, 1],
            &2u64.to_le_bytes(),
            &1u32.to_le_bytes(),
            &[4, 3, 2, 1],
        ]
        .concat();
        assert_eq!(bytes, expected);
    }

    #[test]
    fn round_trip_all_dtypes() {
        let mut c = Container::new();
        c.put_f64("a", &[2, 2], vec![1.0, -2.5, f64::MIN_POSITIVE, 1e300]).unwrap();
        c.put_f32("b", &[3], vec![0.5, 1.25, -0.0]).unwrap();
        c.put_u32("c", &[1, 1, 1], vec![7]).unwrap();
        c.put_text("meta", "hidden = relu\nbeta = 100\n").unwrap();
        let back = Container::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.text("meta").unwrap(), "hidden = relu\nbeta = 100\n");
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(Container::from_bytes(b"FWB2").is_err());
        let mut c = Container::new();
        c.put_f64("x", &[4], vec![0.0; 4]).unwrap();
        let bytes = c.to_bytes();
        assert!(Container::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn dims_must_match_payload() {
        let mut c = Container::new();
        assert!(c.put_f64("x", &[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn missing_chunk_is_named() {
        let c = Container::new();
        let err = c.f64("canonical").unwrap_err();
        assert!(err.to_string().contains("canonical"));
    }
}
