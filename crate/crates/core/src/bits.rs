//! Fixed-length bit columns used for rule firings and labels.

use std::ops::Range;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitColumn {
    words: Vec<u64>,
    len: usize,
}

impl BitColumn {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for b in bits {
            if len % 64 == 0 {
                words.push(0);
            }
            if b {
                words[len / 64] |= 1 << (len % 64);
            }
            len += 1;
        }
        Self { words, len }
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut col = Self::zeros(len);
        for i in indices {
            col.set(i, true);
        }
        col
    }

    pub(crate) fn from_words(words: Vec<u64>, len: usize) -> Self {
        debug_assert_eq!(words.len(), len.div_ceil(64));
        Self { words, len }
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
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
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

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let tz = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + tz)
            })
        })
    }

    /// Copies rows `range` into a new column starting at row 0.
    pub fn slice(&self, range: Range<usize>) -> Self {
        assert!(range.end <= self.len && range.start <= range.end);
        let len = range.end - range.start;
        let shift = range.start % 64;
        let first = range.start / 64;
        let mut words = vec![0u64; len.div_ceil(64)];
        for (k, out) in words.iter_mut().enumerate() {
            let lo = self.words.get(first + k).copied().unwrap_or(0);
            *out = if shift == 0 {
                lo
            } else {
                let hi = self.words.get(first + k + 1).copied().unwrap_or(0);
                (lo >> shift) | (hi << (64 - shift))
            };
        }
        if !len.is_multiple_of(64) {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << (len % 64)) - 1;
            }
        }
        Self { words, len }
    }

    /// Mask of valid bits in the final word.
    #[inline]
    pub(crate) fn tail_mask(len: usize) -> u64 {
        match len % 64 {
            0 => u64::MAX,
            r => (1u64 << r) - 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn set_get_count() {
        let mut c = BitColumn::zeros(130);
        c.set(0, true);
        c.set(64, true);
        c.set(129, true);
        assert!(c.get(64) && !c.get(63));
        assert_eq!(c.count_ones(), 3);
        assert_eq!(c.ones().collect::<Vec<_>>(), vec![0, 64, 129]);
    }

    proptest! {
        #[test]
        fn slice_matches_bitwise_copy(bits in proptest::collection::vec(any::<bool>(), 0..300), a in 0usize..300, b in 0usize..300) {
            let col = BitColumn::from_bools(bits.iter().copied());
            let (lo, hi) = (a.min(b).min(bits.len()), a.max(b).min(bits.len()));
            let s = col.slice(lo..hi);
            prop_assert_eq!(s.len(), hi - lo);
            for i in 0..s.len() {
                prop_assert_eq!(s.get(i), bits[lo + i]);
            }
            prop_assert_eq!(s.count_ones(), bits[lo..hi].iter().filter(|&&x| x).count());
        }
    }
}
