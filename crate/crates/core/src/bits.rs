//! Packed bit vectors and sign binarization.
//!
//! Bits are stored LSB-first in 64-bit words: element `i` lives in word
//! `i / 64` at bit `i % 64`. A set bit encodes `+1`, a clear bit `-1`.
//! Bits past `len` in the last word are always zero.

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVec {
    words: Vec<u64>,
    len: usize,
}

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        BitVec { words: vec![0; words_for(len)], len }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = BitVec { words: vec![u64::MAX; words_for(len)], len };
        v.clear_tail();
        v
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut v = BitVec::default();
        for b in bits {
            v.push(b);
        }
        v
    }

    /// Decodes `+1` as a set bit and anything else as clear.
    pub fn from_signs(signs: &[i8]) -> Self {
        Self::from_bools(signs.iter().map(|&s| s > 0))
    }

    pub fn from_words(words: Vec<u64>, len: usize) -> Self {
        assert_eq!(words.len(), words_for(len), "word count does not match length");
        let mut v = BitVec { words, len };
        v.clear_tail();
        v
    }

    /// Unpacks `len` bits from LSB-first bytes. Extra bits in the final byte are ignored.
    pub fn from_le_bytes(bytes: &[u8], len: usize) -> Self {
        assert!(bytes.len() * 8 >= len, "not enough bytes for {len} bits");
        let mut words = vec![0u64; words_for(len)];
        for (i, &byte) in bytes.iter().take(len.div_ceil(8)).enumerate() {
            words[i / 8] |= (byte as u64) << ((i % 8) * 8);
        }
        Self::from_words(words, len)
    }

    /// Packs into `ceil(len / 8)` LSB-first bytes.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let nbytes = self.len.div_ceil(8);
        let mut out = Vec::with_capacity(nbytes);
        for i in 0..nbytes {
            out.push((self.words[i / 8] >> ((i % 8) * 8)) as u8);
        }
        out
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        let v = self.get(i);
        self.set(i, !v);
    }

    pub fn push(&mut self, value: bool) {
        if self.len.is_multiple_of(64) {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, value);
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// `+1.0` for set bits, `-1.0` for clear bits.
    pub fn to_signs(&self) -> Vec<f64> {
        self.iter().map(|b| if b { 1.0 } else { -1.0 }).collect()
    }

    pub fn not(&self) -> BitVec {
        let mut v = BitVec { words: self.words.iter().map(|w| !w).collect(), len: self.len };
        v.clear_tail();
        v
    }

    pub fn xor(&self, other: &BitVec) -> Result<BitVec> {
        self.check_len(other)?;
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect();
        Ok(BitVec { words, len: self.len })
    }

    /// Number of positions at which the two vectors differ.
    pub fn hamming(&self, other: &BitVec) -> Result<u32> {
        self.check_len(other)?;
        Ok(hamming_words(&self.words, &other.words))
    }

    /// Positions of set bits, ascending.
    pub fn ones_positions(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (wi, &w) in self.words.iter().enumerate() {
            let mut w = w;
            while w != 0 {
                let tz = w.trailing_zeros() as usize;
                out.push(wi * 64 + tz);
                w &= w - 1;
            }
        }
        out
    }

    fn check_len(&self, other: &BitVec) -> Result<()> {
        if self.len != other.len {
            return Err(Error::LengthMismatch { left: self.len, right: other.len });
        }
        Ok(())
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

impl std::fmt::Debug for BitVec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitVec[{}; ", self.len)?;
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        f.write_str("]")
    }
}

#[inline]
pub(crate) fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Sign binarization: `x >= 0` maps to bit 1 (`+1`), `x < 0` to bit 0 (`-1`).
pub fn sign_binarize(x: &[f64]) -> Result<BitVec> {
    let mut out = BitVec::zeros(x.len());
    for (i, &v) in x.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite(i));
        }
        if v >= 0.0 {
            out.set(i, true);
        }
    }
    Ok(out)
}
