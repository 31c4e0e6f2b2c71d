use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;

/// Logical view of a contact vector: bit `i` is slot `c_i`, with `c_0` the
/// latest slot (least significant) and `c_{n-1}` the earliest (most
/// significant). Ordering is numeric.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SlotBits {
    len: u32,
    words: Vec<u64>,
}

impl SlotBits {
    pub fn zeros(len: u32) -> Self {
        SlotBits {
            len,
            words: vec![0; (len as usize).div_ceil(64)],
        }
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: u32) -> bool {
        assert!(i < self.len, "slot {i} out of range for width {}", self.len);
        self.words[(i / 64) as usize] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: u32, on: bool) {
        assert!(i < self.len, "slot {i} out of range for width {}", self.len);
        let w = &mut self.words[(i / 64) as usize];
        if on {
            *w |= 1 << (i % 64);
        } else {
            *w &= !(1 << (i % 64));
        }
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Highest set index: the earliest slot holding a contact.
    pub fn earliest(&self) -> Option<u32> {
        self.words
            .iter()
            .enumerate()
            .rev()
            .find(|(_, &w)| w != 0)
            .map(|(i, &w)| i as u32 * 64 + 63 - w.leading_zeros())
    }

    /// Lowest set index: the latest slot holding a contact.
    pub fn latest(&self) -> Option<u32> {
        self.words
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(i, &w)| i as u32 * 64 + w.trailing_zeros())
    }

    /// Decimal value with `c_0` as the least significant bit.
    pub fn value(&self) -> BigUint {
        let digits: Vec<u32> = self.words.iter().flat_map(|&w| [w as u32, (w >> 32) as u32]).collect();
        BigUint::new(digits)
    }

    /// Value as `u128`, when the width allows it.
    pub fn value_u128(&self) -> Option<u128> {
        if self.words.iter().skip(2).any(|&w| w != 0) {
            return None;
        }
        let lo = self.words.first().copied().unwrap_or(0) as u128;
        let hi = self.words.get(1).copied().unwrap_or(0) as u128;
        Some(hi << 64 | lo)
    }

    pub fn from_u128(len: u32, value: u128) -> Self {
        let mut bits = SlotBits::zeros(len);
        for i in 0..len.min(128) {
            if value >> i & 1 == 1 {
                bits.set(i, true);
            }
        }
        bits
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.len).filter(move |&i| self.get(i))
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }
}

impl Ord for SlotBits {
    fn cmp(&self, other: &Self) -> Ordering {
        let n = self.words.len().max(other.words.len());
        for i in (0..n).rev() {
            let a = self.words.get(i).copied().unwrap_or(0);
            let b = other.words.get(i).copied().unwrap_or(0);
            match a.cmp(&b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        Ordering::Equal
    }
}

impl PartialOrd for SlotBits {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Binary string, most significant (earliest) slot first.
impl fmt::Display for SlotBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in (0..self.len).rev() {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for SlotBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SlotBits({self})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid bit pattern {0:?}")]
pub struct BitsParseError(pub String);

impl FromStr for SlotBits {
    type Err = BitsParseError;

    /// Parses `c_{n-1} ... c_0`, e.g. `"11000"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() || !s.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(BitsParseError(s.to_string()));
        }
        let len = s.len() as u32;
        let mut bits = SlotBits::zeros(len);
        for (k, b) in s.bytes().enumerate() {
            if b == b'1' {
                bits.set(len - 1 - k as u32, true);
            }
        }
        Ok(bits)
    }
}
