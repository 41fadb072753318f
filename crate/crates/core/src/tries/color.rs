//! Coloured-ancestor overlay over a compacted trie. Nodes are marked with
//! colours (interned fingerprints of tails) during preprocessing; after the
//! overlay freezes, `find(u, c)` returns the lowest ancestor-or-self of `u`
//! marked with colour `c`.
//!
//! Queries run in O(log marks-per-colour): marked nodes of one colour are
//! kept ordered by DFS entry time with a max-structure over their subtree
//! exit times, and the answer is the rightmost marked node whose DFS interval
//! contains the query's entry time.

use crate::error::Error;
use crate::fptab::StaticFpTable;
use crate::krhash::Fingerprint;
use crate::tries::build::CompactTrie;

#[derive(Debug, Clone, Default)]
struct ColorSet {
    nodes: Vec<u32>,
    tins: Vec<u32>,
    touts: Vec<u32>,
    /// max-segment-tree over touts
    seg: Vec<u32>,
    size: usize,
}

impl ColorSet {
    fn freeze(&mut self) {
        let mut idx: Vec<usize> = (0..self.nodes.len()).collect();
        idx.sort_by_key(|&i| self.tins[i]);
        self.nodes = idx.iter().map(|&i| self.nodes[i]).collect();
        let touts: Vec<u32> = idx.iter().map(|&i| self.touts[i]).collect();
        self.tins = idx.iter().map(|&i| self.tins[i]).collect();
        self.touts = touts;
        self.size = self.nodes.len().next_power_of_two();
        self.seg = vec![0; 2 * self.size];
        for (i, &t) in self.touts.iter().enumerate() {
            self.seg[self.size + i] = t + 1; // +1 so 0 means "empty slot"
        }
        for i in (1..self.size).rev() {
            self.seg[i] = self.seg[2 * i].max(self.seg[2 * i + 1]);
        }
    }

    /// Rightmost index `< limit` with `touts[idx] >= min_tout`.
    fn rightmost(&self, limit: usize, min_tout: u32) -> Option<usize> {
        if limit == 0 || self.size == 0 {
            return None;
        }
        self.descend(1, 0, self.size, limit, min_tout + 1)
    }

    // right-first descent restricted to [0, limit)
    fn descend(&self, node: usize, lo: usize, hi: usize, limit: usize, need: u32) -> Option<usize> {
        if self.seg[node] < need || lo >= limit {
            return None;
        }
        if hi - lo == 1 {
            return Some(lo);
        }
        let mid = (lo + hi) / 2;
        self.descend(2 * node + 1, mid, hi, limit, need)
            .or_else(|| self.descend(2 * node, lo, mid, limit, need))
    }
}

/// Colour marks over a trie, frozen into a query structure.
#[derive(Debug, Default)]
pub struct ColorOverlay {
    pending: Vec<(u32, Fingerprint)>,
    intern: Option<StaticFpTable<u32>>,
    sets: Vec<ColorSet>,
    tin: Vec<u32>,
    total_marks: usize,
}

impl ColorOverlay {
    pub fn new() -> Self {
        ColorOverlay::default()
    }

    /// Records a mark. Build phase only.
    pub fn mark(&mut self, node: u32, color: Fingerprint) -> Result<(), Error> {
        if self.intern.is_some() {
            return Err(Error::ClassViolation(
                "colour overlay is frozen".into(),
            ));
        }
        self.pending.push((node, color));
        Ok(())
    }

    /// Interns colours to dense ids and builds the per-colour indexes.
    pub fn freeze(&mut self, trie: &CompactTrie) {
        let (tin, tout) = trie.dfs_intervals();
        let mut pairs: Vec<((u64, u64), u32)> = Vec::new();
        let mut sets: Vec<ColorSet> = Vec::new();
        let mut ids: std::collections::HashMap<(u64, u64), u32> = std::collections::HashMap::new();
        let pending = std::mem::take(&mut self.pending);
        for (node, color) in pending {
            let key = (color.value, color.len);
            let id = *ids.entry(key).or_insert_with(|| {
                let id = sets.len() as u32;
                sets.push(ColorSet::default());
                pairs.push((key, id));
                id
            });
            let set = &mut sets[id as usize];
            // collapse duplicate marks of one colour on one node
            if set.nodes.iter().any(|&n| n == node) {
                continue;
            }
            set.nodes.push(node);
            set.tins.push(tin[node as usize]);
            set.touts.push(tout[node as usize]);
            self.total_marks += 1;
        }
        for set in &mut sets {
            set.freeze();
        }
        let (tab, _) = StaticFpTable::build(pairs);
        self.intern = Some(tab);
        self.sets = sets;
        self.tin = tin;
    }

    /// Dense id of a colour, if it was ever marked.
    #[inline]
    pub fn intern(&self, color: Fingerprint) -> Option<u32> {
        self.intern
            .as_ref()
            .expect("overlay not frozen")
            .get(color.value, color.len)
            .copied()
    }

    /// Lowest ancestor-or-self of `u` marked with `color_id`; `None` when no
    /// such ancestor exists or the id is unknown.
    pub fn find(&self, u: u32, color_id: u32) -> Option<u32> {
        let set = self.sets.get(color_id as usize)?;
        let t = self.tin[u as usize];
        let limit = set.tins.partition_point(|&x| x <= t);
        let idx = set.rightmost(limit, t)?;
        Some(set.nodes[idx])
    }

    pub fn find_by_fp(&self, u: u32, color: Fingerprint) -> Option<u32> {
        self.find(u, self.intern(color)?)
    }

    pub fn total_marks(&self) -> usize {
        self.total_marks
    }

    pub fn accounted_words(&self) -> usize {
        self.sets
            .iter()
            .map(|s| s.nodes.len() * 3 + s.seg.len())
            .sum::<usize>()
            + self.tin.len()
            + self.intern.as_ref().map_or(0, |t| t.accounted_words())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tries::build::ROOT;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fp(v: u64) -> Fingerprint {
        Fingerprint { value: v, len: 8 }
    }

    /// Walk-to-root oracle.
    fn oracle_find(trie: &CompactTrie, marks: &[(u32, Fingerprint)], u: u32, c: Fingerprint) -> Option<u32> {
        let mut at = u;
        loop {
            if marks.iter().any(|&(n, col)| n == at && col == c) {
                return Some(at);
            }
            if at == ROOT {
                return None;
            }
            at = trie.parent(at);
        }
    }

    #[test]
    fn chain_examples() {
        // chain root -> "a" -> "ab"
        let strings: Vec<Vec<u8>> = vec![b"a".to_vec(), b"ab".to_vec()];
        let trie = CompactTrie::build(&strings);
        let a = trie.node_of[0];
        let ab = trie.node_of[1];
        let mut ov = ColorOverlay::new();
        ov.mark(a, fp(5)).unwrap();
        ov.mark(ROOT, fp(9)).unwrap();
        ov.freeze(&trie);
        assert_eq!(ov.find_by_fp(ab, fp(5)), Some(a));
        assert_eq!(ov.find_by_fp(a, fp(5)), Some(a)); // self-inclusive
        assert_eq!(ov.find_by_fp(ab, fp(9)), Some(ROOT));
        assert_eq!(ov.find_by_fp(ab, fp(7)), None); // absent colour
        assert_eq!(ov.find(ab, 999), None); // unknown id is not an error
        assert!(ov.mark(a, fp(1)).is_err()); // frozen
    }

    #[test]
    fn two_marks_on_one_path() {
        let strings: Vec<Vec<u8>> = vec![b"a".to_vec(), b"abcd".to_vec()];
        let trie = CompactTrie::build(&strings);
        let a = trie.node_of[0];
        let abcd = trie.node_of[1];
        let mut ov = ColorOverlay::new();
        ov.mark(a, fp(5)).unwrap();
        ov.mark(abcd, fp(5)).unwrap();
        ov.freeze(&trie);
        assert_eq!(ov.find_by_fp(abcd, fp(5)), Some(abcd)); // deeper mark wins
    }

    #[test]
    fn randomised_against_walk_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..300 {
            let k = rng.gen_range(1..=40);
            let strings: Vec<Vec<u8>> = (0..k)
                .map(|_| {
                    let len = rng.gen_range(1..=24);
                    (0..len).map(|_| rng.gen_range(b'a'..=b'c')).collect()
                })
                .collect();
            let trie = CompactTrie::build(&strings);
            let n_colors = rng.gen_range(1..=8u64);
            let mut marks = Vec::new();
            let mut ov = ColorOverlay::new();
            for _ in 0..rng.gen_range(0..40) {
                let node = rng.gen_range(0..trie.len()) as u32;
                let c = fp(rng.gen_range(0..n_colors) * 1000 + 3);
                marks.push((node, c));
                ov.mark(node, c).unwrap();
            }
            ov.freeze(&trie);
            for _ in 0..60 {
                let u = rng.gen_range(0..trie.len()) as u32;
                let c = fp(rng.gen_range(0..n_colors) * 1000 + 3);
                assert_eq!(ov.find_by_fp(u, c), oracle_find(&trie, &marks, u, c));
            }
        }
    }
}
