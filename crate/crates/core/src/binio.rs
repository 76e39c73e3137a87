//! Little-endian readers that remember their byte offset for error messages.

use std::io::Read;

use crate::error::{ConvError, Result};

pub(crate) struct OffsetReader<R> {
    inner: R,
    pub(crate) offset: u64,
}

impl<R: Read> OffsetReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        OffsetReader { inner, offset: 0 }
    }

    pub(crate) fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let mut filled = 0;
        while filled < buf.len() {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => {
                    return Err(ConvError::format(
                        self.offset + filled as u64,
                        format!("truncated while reading {what}"),
                    ))
                }
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        let mut b = [0u8; 1];
        self.read_exact(&mut b, what)?;
        Ok(b[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        let mut b = [0u8; 2];
        self.read_exact(&mut b, what)?;
        Ok(u16::from_le_bytes(b))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b, what)?;
        Ok(f32::from_le_bytes(b))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }
}
