/// Set-associative tag store with LRU replacement. Each resident line
/// remembers when its fill completes.
#[derive(Debug, Clone)]
pub struct Cache {
    line_size: u64,
    ways: usize,
    /// Per set, most recently used first: (line address, fill completion).
    sets: Vec<Vec<(u64, u64)>>,
}

/// Result of looking up one line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    /// Present; data usable from the given cycle.
    Hit(u64),
    Miss,
}

impl Cache {
    pub fn new(capacity: u64, line_size: u64, ways: usize) -> Self {
        let sets = (capacity / (line_size * ways as u64)).max(1) as usize;
        Cache {
            line_size,
            ways,
            sets: vec![Vec::with_capacity(ways); sets],
        }
    }

    pub fn set_count(&self) -> usize {
        self.sets.len()
    }

    pub fn line_of(&self, byte_addr: u64) -> u64 {
        byte_addr / self.line_size
    }

    fn set_of(&self, line: u64) -> usize {
        (line % self.sets.len() as u64) as usize
    }

    /// Looks up a line and makes it most recently used. On a miss the line
    /// is allocated (evicting the LRU way) with the given fill time.
    pub fn access(&mut self, line: u64, fill_done: u64) -> Lookup {
        let ways = self.ways;
        let set = self.set_of(line);
        let entries = &mut self.sets[set];
        if let Some(pos) = entries.iter().position(|&(l, _)| l == line) {
            let e = entries.remove(pos);
            entries.insert(0, e);
            return Lookup::Hit(e.1);
        }
        if entries.len() == ways {
            entries.pop();
        }
        entries.insert(0, (line, fill_done));
        Lookup::Miss
    }

    /// Lines of one set, most recently used first.
    pub fn set_contents(&self, set: usize) -> Vec<u64> {
        self.sets[set].iter().map(|&(l, _)| l).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Reference: a single fully associative LRU list.
    fn reference(seq: &[u64], ways: usize) -> (Vec<bool>, Vec<u64>) {
        let mut lru: Vec<u64> = Vec::new();
        let mut hits = Vec::new();
        for &l in seq {
            if let Some(p) = lru.iter().position(|&x| x == l) {
                lru.remove(p);
                hits.push(true);
            } else {
                if lru.len() == ways {
                    lru.pop();
                }
                hits.push(false);
            }
            lru.insert(0, l);
        }
        (hits, lru)
    }

    proptest! {
        #[test]
        fn agrees_with_single_set_reference(
            picks in prop::collection::vec(0u64..6, 0..200),
            ways in 1usize..5,
        ) {
            let sets = 8u64;
            let mut c = Cache::new(64 * ways as u64 * sets, 64, ways);
            // Lines congruent mod the set count all land in set 3.
            let seq: Vec<u64> = picks.iter().map(|p| p * sets + 3).collect();
            let got: Vec<bool> = seq
                .iter()
                .map(|&l| matches!(c.access(l, 0), Lookup::Hit(_)))
                .collect();
            let (want, lru) = reference(&seq, ways);
            prop_assert_eq!(got, want);
            prop_assert_eq!(c.set_contents(3), lru);
        }
    }

    #[test]
    fn two_way_eviction_order() {
        let mut c = Cache::new(128, 64, 2);
        assert_eq!(c.set_count(), 1);
        assert_eq!(c.access(1, 10), Lookup::Miss);
        assert_eq!(c.access(2, 10), Lookup::Miss);
        assert_eq!(c.access(1, 0), Lookup::Hit(10));
        assert_eq!(c.access(3, 0), Lookup::Miss);
        assert_eq!(c.set_contents(0), vec![3, 1]);
    }
}
