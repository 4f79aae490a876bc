//! Integer range coder over 16-symbol alphabets and the per-frame bitstream
//! container.

mod container;
mod range;

pub use container::{read_container, write_container, FrameHeader, RootBlock, CONTAINER_MAGIC, CONTAINER_VERSION};
pub use range::{decode_symbols, encode_symbols, RangeDecoder, RangeEncoder};

use crate::error::{Error, Result};

/// Probability precision of the coder.
pub const PROB_BITS: u32 = 16;
pub const PROB_TOTAL: u32 = 1 << PROB_BITS;
pub const ALPHABET: usize = 16;

/// Cumulative frequencies of one 16-way distribution; `cum[0] = 0`,
/// `cum[16] = 2^16`, strictly increasing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantizedCdf {
    cum: [u32; ALPHABET + 1],
}

impl QuantizedCdf {
    pub fn uniform() -> Self {
        let mut cum = [0; ALPHABET + 1];
        for (i, c) in cum.iter_mut().enumerate() {
            *c = (i as u32) * (PROB_TOTAL / ALPHABET as u32);
        }
        Self { cum }
    }

    /// From per-symbol frequencies, each ≥ 1, summing to `2^16`.
    pub fn from_freqs(freqs: &[u32; ALPHABET]) -> Result<Self> {
        let mut cum = [0; ALPHABET + 1];
        for (i, &f) in freqs.iter().enumerate() {
            if f == 0 {
                return Err(Error::InvalidProbability(format!("symbol {i} has zero frequency")));
            }
            cum[i + 1] = cum[i] + f;
        }
        if cum[ALPHABET] != PROB_TOTAL {
            return Err(Error::InvalidProbability(format!(
                "frequencies sum to {}, expected {PROB_TOTAL}",
                cum[ALPHABET]
            )));
        }
        Ok(Self { cum })
    }

    #[inline]
    pub fn cum(&self) -> &[u32; ALPHABET + 1] {
        &self.cum
    }

    #[inline]
    pub fn freq(&self, s: usize) -> u32 {
        self.cum[s + 1] - self.cum[s]
    }

    pub fn freqs(&self) -> [u32; ALPHABET] {
        std::array::from_fn(|s| self.freq(s))
    }

    /// Quantized probability of `s`.
    pub fn prob(&self, s: usize) -> f64 {
        self.freq(s) as f64 / PROB_TOTAL as f64
    }

    /// `-log2 q(s)`.
    pub fn bits(&self, s: usize) -> f64 {
        -(self.prob(s)).log2()
    }

    /// Symbol whose interval contains `target < 2^16`.
    #[inline]
    pub fn find(&self, target: u32) -> usize {
        // cum[s] <= target < cum[s+1]
        let mut s = 0;
        while self.cum[s + 1] <= target {
            s += 1;
        }
        s
    }
}

/// Largest-remainder rounding of `row` to frequencies summing to `2^16` with
/// a floor of 1 per symbol. Ties go to the lower symbol index.
pub fn quantize_probs(row: &[f64]) -> Result<QuantizedCdf> {
    if row.len() != ALPHABET {
        return Err(Error::InvalidProbability(format!(
            "row has {} entries, expected {ALPHABET}",
            row.len()
        )));
    }
    if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidProbability(format!("entry {v} is not a finite nonnegative value")));
    }
    let sum: f64 = row.iter().sum();
    if sum <= 0.0 {
        return Err(Error::InvalidProbability("row sums to zero".into()));
    }
    let spare = (PROB_TOTAL - ALPHABET as u32) as u64;
    let mut freqs = [1u32; ALPHABET];
    let mut rem = [0f64; ALPHABET];
    let mut assigned = 0u64;
    for i in 0..ALPHABET {
        let exact = row[i] / sum * spare as f64;
        let fl = exact.floor().min(spare as f64) as u64;
        freqs[i] += fl as u32;
        rem[i] = exact - fl as f64;
        assigned += fl;
    }
    let mut left = spare.saturating_sub(assigned) as usize;
    if left > 0 {
        let mut order: [usize; ALPHABET] = std::array::from_fn(|i| i);
        // Stable sort keeps lower indices first among equal remainders.
        order.sort_by(|&a, &b| rem[b].total_cmp(&rem[a]));
        for &i in order.iter() {
            if left == 0 {
                break;
            }
            freqs[i] += 1;
            left -= 1;
        }
        // Rounding slack in the floors can exceed 16; spread the rest.
        let mut k = 0;
        while left > 0 {
            freqs[order[k % ALPHABET]] += 1;
            left -= 1;
            k += 1;
        }
    } else if assigned > spare {
        // Floating error pushed the floors over budget; take from the largest.
        let mut over = assigned - spare;
        while over > 0 {
            let i = (0..ALPHABET).max_by_key(|&i| (freqs[i], std::cmp::Reverse(i))).unwrap();
            freqs[i] -= 1;
            over -= 1;
        }
    }
    QuantizedCdf::from_freqs(&freqs)
}

#[cfg(test)]
mod tests;
