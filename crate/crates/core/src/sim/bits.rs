use std::fmt;

use serde::{Deserialize, Serialize};

/// A packed bit string. Bit 0 is the first bit written.
#[derive(Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitString {
    len: usize,
    words: Vec<u64>,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn push_bit(&mut self, bit: bool) {
        if self.len % 64 == 0 {
            self.words.push(0);
        }
        if bit {
            self.words[self.len / 64] |= 1 << (self.len % 64);
        }
        self.len += 1;
    }

    /// Appends the low `width` bits of `value`, least significant first.
    pub fn push_uint(&mut self, value: u64, width: usize) {
        debug_assert!(width <= 64);
        debug_assert!(width == 64 || value >> width == 0, "{value} does not fit {width} bits");
        for i in 0..width {
            self.push_bit(value >> i & 1 == 1);
        }
    }

    pub fn extend_from(&mut self, other: &BitString) {
        for i in 0..other.len {
            self.push_bit(other.get(i));
        }
    }

    /// Bits `start..start + len` as a new string.
    pub fn slice(&self, start: usize, len: usize) -> BitString {
        let mut out = BitString::new();
        for i in start..start + len {
            out.push_bit(self.get(i));
        }
        out
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader { bits: self, pos: 0 }
    }

    pub fn zeros(len: usize) -> Self {
        BitString {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_uint(value: u64, width: usize) -> Self {
        let mut b = BitString::new();
        b.push_uint(value, width);
        b
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString[{}](", self.len)?;
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        f.write_str(")")
    }
}

pub struct BitReader<'a> {
    bits: &'a BitString,
    pos: usize,
}

impl BitReader<'_> {
    pub fn remaining(&self) -> usize {
        self.bits.len - self.pos
    }

    pub fn read_bit(&mut self) -> Option<bool> {
        (self.pos < self.bits.len).then(|| {
            self.pos += 1;
            self.bits.get(self.pos - 1)
        })
    }

    pub fn read_uint(&mut self, width: usize) -> Option<u64> {
        if self.remaining() < width {
            return None;
        }
        let mut v = 0u64;
        for i in 0..width {
            if self.bits.get(self.pos + i) {
                v |= 1 << i;
            }
        }
        self.pos += width;
        Some(v)
    }

    pub fn read_bits(&mut self, len: usize) -> Option<BitString> {
        (self.remaining() >= len).then(|| {
            let s = self.bits.slice(self.pos, len);
            self.pos += len;
            s
        })
    }
}

/// Bits needed to write every value in `0..=max`.
pub fn width_for(max: u64) -> usize {
    (64 - max.leading_zeros() as usize).max(1)
}

/// `ceil(log2(x))`, with `ceil_log2(1) = 0`.
pub fn ceil_log2(x: u64) -> usize {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros() as usize
    }
}

/// Splits `payload` into fragments of at most `bandwidth` bits, each
/// carrying a `header`-bit sequence number ahead of its body.
pub fn fragment(payload: &BitString, bandwidth: usize, header: usize) -> Vec<BitString> {
    assert!(bandwidth > header, "bandwidth must exceed the fragment header");
    let body = bandwidth - header;
    let seq_mask = if header >= 64 { u64::MAX } else { (1u64 << header) - 1 };
    (0..payload.len().div_ceil(body))
        .map(|k| {
            let start = k * body;
            let take = body.min(payload.len() - start);
            let mut f = BitString::from_uint(k as u64 & seq_mask, header);
            f.extend_from(&payload.slice(start, take));
            f
        })
        .collect()
}

/// Inverse of [`fragment`] for fragments delivered in order.
pub fn reassemble(fragments: &[BitString], header: usize) -> BitString {
    let mut out = BitString::new();
    for f in fragments {
        out.extend_from(&f.slice(header, f.len() - header));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fragment_examples() {
        let mut small = BitString::new();
        small.push_uint(0b1011, 32);
        assert_eq!(fragment(&small, 40, 8).len(), 1);
        assert!(fragment(&BitString::new(), 40, 8).is_empty());
        let mut p = BitString::new();
        for i in 0..100 {
            p.push_bit(i % 3 == 0);
        }
        let frags = fragment(&p, 40, 8);
        let bodies: Vec<usize> = frags.iter().map(|f| f.len() - 8).collect();
        assert_eq!(bodies, vec![32, 32, 32, 4]);
        assert!(frags.iter().all(|f| f.len() <= 40));
    }

    #[test]
    fn widths() {
        assert_eq!(width_for(0), 1);
        assert_eq!(width_for(1), 1);
        assert_eq!(width_for(7), 3);
        assert_eq!(width_for(8), 4);
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(64), 6);
        assert_eq!(ceil_log2(65), 7);
    }

    proptest! {
        #[test]
        fn fragments_reassemble(bits in proptest::collection::vec(any::<bool>(), 0..300), b in 9usize..80) {
            let mut p = BitString::new();
            for &x in &bits { p.push_bit(x); }
            let frags = fragment(&p, b, 8);
            prop_assert!(frags.iter().all(|f| f.len() <= b));
            prop_assert_eq!(reassemble(&frags, 8), p);
        }

        #[test]
        fn uints_round_trip(vals in proptest::collection::vec((any::<u64>(), 1usize..=64), 0..20)) {
            let mut s = BitString::new();
            let vals: Vec<(u64, usize)> = vals.into_iter()
                .map(|(v, w)| (if w == 64 { v } else { v & ((1 << w) - 1) }, w))
                .collect();
            for &(v, w) in &vals { s.push_uint(v, w); }
            let mut r = s.reader();
            for &(v, w) in &vals { prop_assert_eq!(r.read_uint(w), Some(v)); }
            prop_assert_eq!(r.remaining(), 0);
        }
    }
}
