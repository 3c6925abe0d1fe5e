//! Fixed-width index packing, most significant bit first.

use crate::error::{Error, Result};

#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bits: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the low `width` bits of `value`.
    pub fn write(&mut self, value: u32, width: u32) {
        debug_assert!(width <= 32);
        debug_assert!(width == 32 || value >> width == 0);
        for k in (0..width).rev() {
            let bit = (value >> k) & 1;
            let used = (self.bits % 8) as u32;
            if used == 0 {
                self.bytes.push(0);
            }
            if bit == 1 {
                *self.bytes.last_mut().unwrap() |= 0x80 >> used;
            }
            self.bits += 1;
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.bits
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

/// Reads back what [`BitWriter`] wrote, never past `limit` bits.
#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
    limit: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8], limit: u64) -> Result<Self> {
        if limit > bytes.len() as u64 * 8 {
            return Err(Error::CorruptStream(format!(
                "payload declares {limit} bits but holds only {}",
                bytes.len() * 8
            )));
        }
        Ok(Self {
            bytes,
            pos: 0,
            limit,
        })
    }

    pub fn read(&mut self, width: u32) -> Result<u32> {
        if self.pos + width as u64 > self.limit {
            return Err(Error::CorruptStream(format!(
                "read of {width} bits at bit {} passes the payload end at {}",
                self.pos, self.limit
            )));
        }
        let mut v = 0u32;
        for _ in 0..width {
            let byte = self.bytes[(self.pos / 8) as usize];
            let bit = (byte >> (7 - (self.pos % 8))) & 1;
            v = (v << 1) | bit as u32;
            self.pos += 1;
        }
        Ok(v)
    }

    pub fn position(&self) -> u64 {
        self.pos
    }
}

/// Packs `indices` at `width` bits each.
pub fn pack(indices: &[u32], width: u32) -> Vec<u8> {
    let mut w = BitWriter::new();
    for i in indices {
        w.write(*i, width);
    }
    w.into_bytes()
}

pub fn unpack(bytes: &[u8], width: u32, count: usize) -> Result<Vec<u32>> {
    let mut r = BitReader::new(bytes, width as u64 * count as u64)?;
    (0..count).map(|_| r.read(width)).collect()
}
