//! Fixed-width slot bitmaps used for occupancy and for candidate start positions.

use std::fmt;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SlotMask {
    len: u32,
    words: Vec<u64>,
}

impl SlotMask {
    pub fn empty(len: u32) -> Self {
        Self { len, words: vec![0; (len as usize).div_ceil(64)] }
    }

    pub fn full(len: u32) -> Self {
        let mut m = Self::empty(len);
        m.set_range(0, len);
        m
    }

    /// Parses a string of `0`/`1` characters, slot 0 first.
    pub fn from_bits(bits: &str) -> Self {
        let mut m = Self::empty(bits.len() as u32);
        for (i, c) in bits.chars().enumerate() {
            if c == '1' {
                m.set(i as u32);
            }
        }
        m
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: u32) -> bool {
        i < self.len && self.words[(i / 64) as usize] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: u32) {
        debug_assert!(i < self.len);
        self.words[(i / 64) as usize] |= 1 << (i % 64);
    }

    pub fn clear(&mut self, i: u32) {
        self.words[(i / 64) as usize] &= !(1 << (i % 64));
    }

    pub fn set_range(&mut self, start: u32, count: u32) {
        for i in start..(start + count).min(self.len) {
            self.set(i);
        }
    }

    pub fn clear_range(&mut self, start: u32, count: u32) {
        for i in start..(start + count).min(self.len) {
            self.clear(i);
        }
    }

    pub fn any_in_range(&self, start: u32, count: u32) -> bool {
        (start..start + count).any(|i| i >= self.len || self.get(i))
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn none(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn union_with(&mut self, other: &Self) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &Self) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        let mut m = self.clone();
        m.intersect_with(other);
        m
    }

    pub fn intersects(&self, other: &Self) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn is_superset(&self, other: &Self) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| b & !a == 0)
    }

    pub fn first_one(&self) -> Option<u32> {
        self.words.iter().enumerate().find(|(_, &w)| w != 0).map(|(i, w)| i as u32 * 64 + w.trailing_zeros())
    }

    pub fn ones(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.len).filter(move |&i| self.get(i))
    }

    /// Treating `self` as occupancy, the set of start indices `s` for which
    /// `[s, s + width)` lies inside the grid and is entirely free.
    pub fn free_starts(&self, width: u32) -> Self {
        let mut starts = Self::empty(self.len);
        if width == 0 || width > self.len {
            return starts;
        }
        let mut run = 0u32;
        for i in 0..self.len {
            if self.get(i) {
                run = 0;
            } else {
                run += 1;
                if run >= width {
                    starts.set(i + 1 - width);
                }
            }
        }
        starts
    }
}

impl fmt::Debug for SlotMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.len).map(|i| if self.get(i) { '1' } else { '0' }).collect();
        write!(f, "SlotMask({s})")
    }
}
