//! Carry-less range coder (Subbotin style) on 64-bit state.
//!
//! Renormalization emits the top byte whenever it can no longer change, or
//! when the range has become too small, in which case the range is shrunk so
//! that the top byte is settled. The flush writes two bytes: the smallest
//! multiple of `2^48` inside the final interval.

use super::{QuantizedCdf, PROB_BITS, PROB_TOTAL};
use crate::error::{Error, Result};

const TOP: u64 = 1 << 56;
const BOT: u64 = 1 << 48;
const FLUSH_BYTES: usize = 2;
/// The decoder primes 8 bytes but the flush only wrote 2.
const TAIL_OVERRUN: usize = 8 - FLUSH_BYTES;

#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u64,
    range: u64,
    out: Vec<u8>,
    symbols: u64,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u64::MAX,
            out: Vec::new(),
            symbols: 0,
        }
    }

    pub fn encode(&mut self, symbol: usize, cdf: &QuantizedCdf) {
        let cum = cdf.cum();
        let (lo, f) = (cum[symbol] as u64, (cum[symbol + 1] - cum[symbol]) as u64);
        self.range >>= PROB_BITS;
        self.low = self.low.wrapping_add(lo * self.range);
        self.range *= f;
        self.symbols += 1;
        self.normalize();
    }

    fn normalize(&mut self) {
        loop {
            if (self.low ^ self.low.wrapping_add(self.range)) >= TOP {
                if self.range >= BOT {
                    break;
                }
                self.range = self.low.wrapping_neg() & (BOT - 1);
            }
            self.out.push((self.low >> 56) as u8);
            self.low <<= 8;
            self.range <<= 8;
        }
    }

    pub fn symbols(&self) -> u64 {
        self.symbols
    }

    /// Bytes emitted so far, excluding the flush.
    pub fn len(&self) -> usize {
        self.out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.out.is_empty()
    }

    pub fn finish(mut self) -> Vec<u8> {
        // range >= BOT here, so a multiple of BOT lies in [low, low + range).
        let v = self.low.wrapping_add(BOT - 1) & !(BOT - 1);
        for k in 0..FLUSH_BYTES {
            self.out.push((v >> (56 - 8 * k)) as u8);
        }
        self.out
    }
}

#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    low: u64,
    range: u64,
    code: u64,
    data: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        if data.len() < FLUSH_BYTES {
            return Err(Error::CorruptStream(format!(
                "payload of {} bytes is shorter than the coder flush",
                data.len()
            )));
        }
        let mut d = Self {
            low: 0,
            range: u64::MAX,
            code: 0,
            data,
            pos: 0,
        };
        for _ in 0..8 {
            d.code = d.code << 8 | d.next_byte() as u64;
        }
        Ok(d)
    }

    #[inline]
    fn next_byte(&mut self) -> u8 {
        let b = self.data.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    pub fn decode(&mut self, cdf: &QuantizedCdf) -> Result<usize> {
        if self.pos > self.data.len() + TAIL_OVERRUN {
            return Err(Error::CorruptStream("read past the end of the payload".into()));
        }
        self.range >>= PROB_BITS;
        let target = self.code.wrapping_sub(self.low) / self.range;
        if target >= PROB_TOTAL as u64 {
            return Err(Error::CorruptStream("coder state outside the current interval".into()));
        }
        let s = cdf.find(target as u32);
        let cum = cdf.cum();
        self.low = self.low.wrapping_add(cum[s] as u64 * self.range);
        self.range *= (cum[s + 1] - cum[s]) as u64;
        loop {
            if (self.low ^ self.low.wrapping_add(self.range)) >= TOP {
                if self.range >= BOT {
                    break;
                }
                self.range = self.low.wrapping_neg() & (BOT - 1);
            }
            self.code = self.code << 8 | self.next_byte() as u64;
            self.low <<= 8;
            self.range <<= 8;
        }
        Ok(s)
    }

    /// Checks that the payload was consumed exactly.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.data.len() + TAIL_OVERRUN {
            return Err(Error::CorruptStream(format!(
                "payload has {} bytes but the symbols consumed {}",
                self.data.len(),
                self.pos as i64 - TAIL_OVERRUN as i64
            )));
        }
        Ok(())
    }
}

/// Codes `symbols[i]` under `cdfs[i]` and flushes.
pub fn encode_symbols(symbols: &[u8], cdfs: &[QuantizedCdf]) -> Result<Vec<u8>> {
    if symbols.len() != cdfs.len() {
        return Err(Error::Shape(format!(
            "{} symbols but {} distributions",
            symbols.len(),
            cdfs.len()
        )));
    }
    let mut enc = RangeEncoder::new();
    for (&s, cdf) in symbols.iter().zip(cdfs) {
        if s as usize >= super::ALPHABET {
            return Err(Error::Index(format!("symbol {s} outside the 16-symbol alphabet")));
        }
        enc.encode(s as usize, cdf);
    }
    Ok(enc.finish())
}

/// Inverse of [`encode_symbols`]; `cdfs.len()` symbols are read.
pub fn decode_symbols(bytes: &[u8], cdfs: &[QuantizedCdf]) -> Result<Vec<u8>> {
    let mut dec = RangeDecoder::new(bytes)?;
    let mut out = Vec::with_capacity(cdfs.len());
    for cdf in cdfs {
        out.push(dec.decode(cdf)? as u8);
    }
    dec.finish()?;
    Ok(out)
}
