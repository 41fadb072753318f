//! Compacted trie over the reverses of the pattern stems (pattern minus its
//! fixed-length tail), with a coloured-ancestor overlay keyed by tail
//! fingerprints. A stem that is a suffix of another becomes an ancestor of
//! it here, so the lowest coloured ancestor of a matched stem's node is the
//! longest pattern whose stem matches and whose tail fingerprint equals the
//! queried colour. Edge labels are not stored.

use crate::krhash::Fingerprint;
use crate::tries::build::CompactTrie;
use crate::tries::color::ColorOverlay;

#[derive(Debug)]
pub struct CompactQTrie {
    pub trie: CompactTrie,
    pub overlay: ColorOverlay,
    /// Pattern index -> node representing its reversed stem.
    node_of: Vec<u32>,
}

impl CompactQTrie {
    /// Builds the trie from `(stem, tail colour)` pairs; stems are reversed
    /// internally.
    pub fn build(stems: &[Vec<u8>], colors: &[Fingerprint]) -> Self {
        assert_eq!(stems.len(), colors.len());
        let reversed: Vec<Vec<u8>> = stems
            .iter()
            .map(|s| s.iter().rev().copied().collect())
            .collect();
        let trie = CompactTrie::build(&reversed);
        let node_of = trie.node_of.clone();
        let mut overlay = ColorOverlay::new();
        for (i, &c) in colors.iter().enumerate() {
            overlay
                .mark(node_of[i], c)
                .expect("overlay frozen during build");
        }
        overlay.freeze(&trie);
        CompactQTrie {
            trie,
            overlay,
            node_of,
        }
    }

    /// Node of pattern `i`'s reversed stem, in O(1).
    #[inline]
    pub fn node(&self, i: usize) -> u32 {
        self.node_of[i]
    }

    /// Lowest ancestor-or-self of `u` marked with the colour of `tail_fp`.
    #[inline]
    pub fn find(&self, u: u32, tail_fp: Fingerprint) -> Option<u32> {
        self.overlay.find_by_fp(u, tail_fp)
    }

    pub fn accounted_words(&self) -> usize {
        self.trie.accounted_words() + self.overlay.accounted_words() + self.node_of.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stringology::is_suffix;

    fn fp(v: u64) -> Fingerprint {
        Fingerprint { value: v, len: 4 }
    }

    #[test]
    fn single_pattern_path() {
        let q = CompactQTrie::build(&[b"abc".to_vec()], &[fp(1)]);
        assert_eq!(q.trie.len(), 2);
        assert_eq!(q.find(q.node(0), fp(1)), Some(q.node(0)));
        assert_eq!(q.find(q.node(0), fp(2)), None);
    }

    #[test]
    fn suffix_stem_is_ancestor() {
        // stem 0 is a suffix of stem 1, so node(0) must be an ancestor of node(1)
        let stems = vec![b"bc".to_vec(), b"abc".to_vec()];
        assert!(is_suffix(&stems[0], &stems[1]));
        let q = CompactQTrie::build(&stems, &[fp(1), fp(2)]);
        let mut at = q.node(1);
        let mut seen = false;
        while at != crate::tries::build::ROOT {
            at = q.trie.parent(at);
            if at == q.node(0) {
                seen = true;
            }
        }
        assert!(seen || q.node(0) == q.node(1));
        // the colour of the shorter pattern is found from the longer's node
        assert_eq!(q.find(q.node(1), fp(1)), Some(q.node(0)));
        assert_eq!(q.find(q.node(1), fp(2)), Some(q.node(1)));
    }

    #[test]
    fn distinct_first_bytes_fan_out() {
        let stems: Vec<Vec<u8>> = vec![b"xa".to_vec(), b"yb".to_vec(), b"zc".to_vec()];
        // reversed stems end with distinct first bytes a/b/c
        let q = CompactQTrie::build(&stems, &[fp(1), fp(2), fp(3)]);
        assert_eq!(q.trie.nodes[0].children.len(), 3);
        assert_eq!(q.trie.len(), 4); // root + k nodes, <= 2k-1 nodes overall
    }
}
