use std::fmt;

/// Number of edge counters in a coverage map.
pub const MAP_SIZE: usize = 1 << 16;

/// Edge hit counters, AFL layout.
#[derive(Clone, PartialEq, Eq)]
pub struct CoverageBitmap {
    edges: Box<[u8]>,
}

impl fmt::Debug for CoverageBitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoverageBitmap")
            .field("nonzero", &self.count_nonzero())
            .finish()
    }
}

impl Default for CoverageBitmap {
    fn default() -> Self {
        Self::new()
    }
}

/// AFL hit-count classes: 1, 2, 3, 4-7, 8-15, 16-31, 32-127, 128+. Each
/// class is stored as its smallest count, so bucketing a bucketed map is a
/// no-op and merging maps stays a semilattice.
const fn build_buckets() -> [u8; 256] {
    let mut t = [0u8; 256];
    let mut i = 1;
    while i < 256 {
        t[i] = match i {
            1 => 1,
            2 => 2,
            3 => 3,
            4..=7 => 4,
            8..=15 => 8,
            16..=31 => 16,
            32..=127 => 32,
            _ => 128,
        };
        i += 1;
    }
    t
}

static BUCKETS: [u8; 256] = build_buckets();

#[inline]
pub fn bucket(count: u8) -> u8 {
    BUCKETS[count as usize]
}

impl CoverageBitmap {
    pub fn new() -> Self {
        CoverageBitmap {
            edges: vec![0u8; MAP_SIZE].into_boxed_slice(),
        }
    }

    /// Saturating increment.
    #[inline]
    pub fn hit(&mut self, index: usize) {
        let c = &mut self.edges[index & (MAP_SIZE - 1)];
        *c = c.saturating_add(1);
    }

    pub fn get(&self, index: usize) -> u8 {
        self.edges[index]
    }

    pub fn set(&mut self, index: usize, value: u8) {
        self.edges[index] = value;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.edges
    }

    pub fn count_nonzero(&self) -> usize {
        self.edges.iter().filter(|&&c| c != 0).count()
    }

    pub fn clear(&mut self) {
        self.edges.fill(0);
    }

    /// Merges the bucketed counters of `run` into `self` by element-wise max
    /// and returns how many counters were zero here but nonzero in `run`.
    pub fn merge_bucketed(&mut self, run: &CoverageBitmap) -> usize {
        let mut new_edges = 0;
        for (chunk_g, chunk_r) in self.edges.chunks_exact_mut(8).zip(run.edges.chunks_exact(8)) {
            if u64::from_ne_bytes(chunk_r.try_into().unwrap()) == 0 {
                continue;
            }
            for (g, &r) in chunk_g.iter_mut().zip(chunk_r) {
                let b = bucket(r);
                if b != 0 {
                    if *g == 0 {
                        new_edges += 1;
                    }
                    if b > *g {
                        *g = b;
                    }
                }
            }
        }
        new_edges
    }

    /// Counts edges `run` would add without modifying `self`.
    pub fn count_new(&self, run: &CoverageBitmap) -> usize {
        self.edges
            .iter()
            .zip(run.edges.iter())
            .filter(|(&g, &r)| g == 0 && r != 0)
            .count()
    }

    /// Indices of nonzero counters; handy for sparse debugging output.
    pub fn nonzero_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(i, _)| i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_table() {
        let expect = [
            (0u8, 0u8),
            (1, 1),
            (2, 2),
            (3, 3),
            (4, 4),
            (7, 4),
            (8, 8),
            (15, 8),
            (16, 16),
            (31, 16),
            (32, 32),
            (127, 32),
            (128, 128),
            (255, 128),
        ];
        for (count, b) in expect {
            assert_eq!(bucket(count), b, "count {count}");
        }
    }

    #[test]
    fn counters_saturate() {
        let mut m = CoverageBitmap::new();
        for _ in 0..300 {
            m.hit(7);
        }
        assert_eq!(m.get(7), 255);
    }

    #[test]
    fn index_wraps_to_map() {
        let mut m = CoverageBitmap::new();
        m.hit(MAP_SIZE + 3);
        assert_eq!(m.get(3), 1);
    }
}
