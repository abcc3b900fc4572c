//! Canonical byte encodings.
//!
//! Every wire and fixture format in this crate is built from four
//! primitives: single bytes, big-endian `u32`/`u64` integers, raw fixed
//! width byte strings, and *frames*. A frame is a 4-byte big-endian length
//! followed by that many bytes. Variable-length fields are always framed,
//! so decoders never have to guess where a field ends.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input: needed {needed} bytes, {available} left")]
    Truncated { needed: usize, available: usize },
    #[error("{0} trailing bytes after the last field")]
    Trailing(usize),
    #[error("invalid {what}")]
    Invalid { what: &'static str },
}

impl DecodeError {
    pub(crate) fn invalid(what: &'static str) -> Self {
        DecodeError::Invalid { what }
    }
}

/// Append-only encoder.
#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    /// Raw bytes with no length prefix; only for fixed-width fields.
    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    /// A length-prefixed byte string.
    pub fn frame(&mut self, bytes: &[u8]) -> &mut Self {
        let len = u32::try_from(bytes.len()).expect("frame longer than u32::MAX");
        self.u32(len);
        self.raw(bytes)
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.buf
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Cursor over an encoded buffer.
#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < n {
            return Err(DecodeError::Truncated {
                needed: n,
                available: self.buf.len(),
            });
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes(b.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().unwrap()))
    }

    pub fn raw(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        self.take(n)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub fn frame(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len()
    }

    /// Fails if any bytes are left over.
    pub fn finish(self) -> Result<(), DecodeError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::Trailing(self.buf.len()))
        }
    }
}

/// Splits a buffer made only of frames into the frame payloads.
pub fn split_frames(buf: &[u8]) -> Result<Vec<&[u8]>, DecodeError> {
    let mut reader = Reader::new(buf);
    let mut out = Vec::new();
    while reader.remaining() > 0 {
        out.push(reader.frame()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_layout_is_length_prefixed_big_endian() {
        let mut w = Writer::new();
        w.frame(b"abc").u64(7);
        assert_eq!(
            w.as_bytes(),
            &[0, 0, 0, 3, b'a', b'b', b'c', 0, 0, 0, 0, 0, 0, 0, 7]
        );
    }

    #[test]
    fn truncated_frame_is_an_error() {
        let mut r = Reader::new(&[0, 0, 0, 5, 1, 2]);
        assert_eq!(
            r.frame(),
            Err(DecodeError::Truncated {
                needed: 5,
                available: 2
            })
        );
    }

    #[test]
    fn trailing_bytes_detected() {
        let mut r = Reader::new(&[1, 2]);
        r.u8().unwrap();
        assert_eq!(r.finish(), Err(DecodeError::Trailing(1)));
    }

    #[test]
    fn split_frames_round_trip() {
        let mut w = Writer::new();
        w.frame(b"").frame(b"xy").frame(&[9; 300]);
        let frames = split_frames(w.as_bytes()).unwrap();
        assert_eq!(frames.len(), 3);
        assert_eq!(frames[1], b"xy");
        assert_eq!(frames[2].len(), 300);
    }
}
