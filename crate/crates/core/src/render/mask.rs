//! Windowed bit masks.

use serde::{Deserialize, Serialize};

/// Boolean `size x size` grid. Only the window `[x0, x1) x [y0, y1)` is
/// stored; everything outside it is unset. Equality compares pixel sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BitMask {
    pub size: usize,
    pub window: [usize; 4],
    bits: Vec<u64>,
    pub area: usize,
}

impl BitMask {
    pub fn empty(size: usize) -> BitMask {
        BitMask {
            size,
            window: [0, 0, 0, 0],
            bits: Vec::new(),
            area: 0,
        }
    }

    /// Mask over `window`, filled by `f(x, y)`.
    pub fn from_fn(size: usize, window: [usize; 4], mut f: impl FnMut(usize, usize) -> bool) -> BitMask {
        let [x0, y0, x1, y1] = window;
        let w = x1.saturating_sub(x0);
        let h = y1.saturating_sub(y0);
        let mut bits = vec![0u64; (w * h).div_ceil(64)];
        let mut area = 0;
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                if f(x, y) {
                    let k = (y - y0) * w + (x - x0);
                    bits[k / 64] |= 1 << (k % 64);
                    area += 1;
                }
            }
        }
        BitMask {
            size,
            window: [x0, y0, x0 + w, y0 + h],
            bits,
            area,
        }
    }

    /// Pixels of `ids` equal to `id`.
    pub fn from_ids(ids: &[u32], size: usize, id: u32) -> BitMask {
        match tight_window(ids, size, id) {
            Some(w) => BitMask::from_fn(size, w, |x, y| ids[y * size + x] == id),
            None => BitMask::empty(size),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        let [x0, y0, x1, y1] = self.window;
        if x < x0 || x >= x1 || y < y0 || y >= y1 {
            return false;
        }
        let k = (y - y0) * (x1 - x0) + (x - x0);
        self.bits[k / 64] >> (k % 64) & 1 == 1
    }

    pub fn is_empty(&self) -> bool {
        self.area == 0
    }

    /// Set pixels in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let [x0, y0, x1, y1] = self.window;
        (y0..y1)
            .flat_map(move |y| (x0..x1).map(move |x| (x, y)))
            .filter(|&(x, y)| self.get(x, y))
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }
}

impl PartialEq for BitMask {
    fn eq(&self, other: &BitMask) -> bool {
        self.size == other.size && self.area == other.area && self.iter().all(|(x, y)| other.get(x, y))
    }
}

impl Eq for BitMask {}

fn tight_window(ids: &[u32], size: usize, id: u32) -> Option<[usize; 4]> {
    let mut w = [usize::MAX, usize::MAX, 0, 0];
    for (i, &v) in ids.iter().enumerate() {
        if v == id {
            let (x, y) = (i % size, i / size);
            w[0] = w[0].min(x);
            w[1] = w[1].min(y);
            w[2] = w[2].max(x + 1);
            w[3] = w[3].max(y + 1);
        }
    }
    (w[0] != usize::MAX).then_some(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_matches_bits() {
        let m = BitMask::from_fn(32, [3, 4, 20, 9], |x, y| (x + y) % 3 == 0);
        assert_eq!(m.area, m.count_ones());
        assert_eq!(m.area, m.iter().count());
        assert!(!m.get(0, 0) && !m.get(31, 31));
    }

    #[test]
    fn from_ids_is_tight() {
        let mut ids = vec![0u32; 64];
        ids[8 * 2 + 3] = 5;
        ids[8 * 6 + 1] = 5;
        let m = BitMask::from_ids(&ids, 8, 5);
        assert_eq!(m.window, [1, 2, 4, 7]);
        assert_eq!(m.area, 2);
        assert!(BitMask::from_ids(&ids, 8, 9).is_empty());
        let wide = BitMask::from_fn(8, [0, 0, 8, 8], |x, y| ids[y * 8 + x] == 5);
        assert_eq!(wide, m);
    }
}
