//! Little-endian byte stream helpers for the binary file formats
//! (snapshot files, network checkpoints, reservoir checkpoints).

use std::io::{Read, Write};

use crate::{Error, Result};

pub struct ByteWriter<W: Write> {
    inner: W,
    path: String,
}

impl<W: Write> ByteWriter<W> {
    pub fn new(inner: W, path: impl Into<String>) -> Self {
        Self {
            inner,
            path: path.into(),
        }
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner
            .write_all(b)
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64_slice(&mut self, vs: &[f64]) -> Result<()> {
        // One pass through a byte buffer keeps syscall counts low.
        let mut buf = Vec::with_capacity(vs.len() * 8);
        for v in vs {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.bytes(&buf)
    }

    pub fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len() as u32)?;
        self.bytes(s.as_bytes())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner
            .flush()
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub struct ByteReader<R: Read> {
    inner: R,
    path: String,
}

impl<R: Read> ByteReader<R> {
    pub fn new(inner: R, path: impl Into<String>) -> Self {
        Self {
            inner,
            path: path.into(),
        }
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::format(&self.path, "unexpected end of file"))?;
        Ok(buf)
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        let b = self.bytes(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        let b = self.bytes(8)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let buf = self.bytes(n * 8)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        if n > 1 << 20 {
            return Err(Error::format(&self.path, "unreasonable string length"));
        }
        let b = self.bytes(n)?;
        String::from_utf8(b).map_err(|_| Error::format(&self.path, "invalid utf-8 string"))
    }

    pub fn magic(&mut self, expect: &[u8; 4]) -> Result<()> {
        let b = self.bytes(4)?;
        if b != expect {
            return Err(Error::format(
                &self.path,
                format!("bad magic, expected {:?}", std::str::from_utf8(expect).unwrap()),
            ));
        }
        Ok(())
    }
}
