//! Aho-Corasick automaton. Serves the very-short-pattern path of the short
//! strategy and doubles as the offline ground-truth oracle for equivalence
//! tests.

use crate::error::Error;
use crate::fptab::ByteTable;
use std::collections::{HashMap, VecDeque};

pub const ROOT: u32 = 0;

#[derive(Debug)]
struct Node {
    table: ByteTable,
    fail: u32,
    /// Pattern ids ending at this state, closed under failure links.
    outputs: Vec<u32>,
}

/// Trie of the pattern set with failure links and per-state static
/// transition tables. Immutable after build; the traversal state is a plain
/// state id owned by the caller.
#[derive(Debug)]
pub struct AcAutomaton {
    nodes: Vec<Node>,
}

impl AcAutomaton {
    /// Builds the automaton. An empty pattern list yields an automaton that
    /// never reports; an empty pattern is an error.
    pub fn build(patterns: &[&[u8]]) -> Result<Self, Error> {
        let mut goto: Vec<HashMap<u8, u32>> = vec![HashMap::new()];
        let mut outputs: Vec<Vec<u32>> = vec![Vec::new()];
        for (id, pat) in patterns.iter().enumerate() {
            if pat.is_empty() {
                return Err(Error::EmptyPattern);
            }
            let mut state = ROOT;
            for &c in *pat {
                state = match goto[state as usize].get(&c) {
                    Some(&next) => next,
                    None => {
                        let next = goto.len() as u32;
                        goto.push(HashMap::new());
                        outputs.push(Vec::new());
                        goto[state as usize].insert(c, next);
                        next
                    }
                };
            }
            outputs[state as usize].push(id as u32);
        }

        let mut fail = vec![ROOT; goto.len()];
        let mut queue = VecDeque::new();
        for (&_c, &child) in &goto[ROOT as usize] {
            queue.push_back(child);
        }
        while let Some(state) = queue.pop_front() {
            let edges: Vec<(u8, u32)> = goto[state as usize].iter().map(|(&c, &n)| (c, n)).collect();
            for (c, next) in edges {
                queue.push_back(next);
                let mut f = fail[state as usize];
                loop {
                    if let Some(&target) = goto[f as usize].get(&c) {
                        if target != next {
                            fail[next as usize] = target;
                        }
                        break;
                    }
                    if f == ROOT {
                        break;
                    }
                    f = fail[f as usize];
                }
            }
            // close outputs under the failure link (fail[state] is already closed)
            let inherited = outputs[fail[state as usize] as usize].clone();
            outputs[state as usize].extend(inherited);
        }

        let nodes = goto
            .into_iter()
            .zip(fail)
            .zip(outputs)
            .map(|((g, f), o)| {
                let edges: Vec<(u8, u32)> = g.into_iter().collect();
                Node {
                    table: ByteTable::build(&edges),
                    fail: f,
                    outputs: o,
                }
            })
            .collect();
        Ok(AcAutomaton { nodes })
    }

    /// Consumes one character, resolving the transition through the failure
    /// chain. Returns the next state and the number of failure hops taken;
    /// total hops over any stream are amortised O(1) per arrival.
    #[inline]
    pub fn step_counting(&self, mut state: u32, c: u8) -> (u32, u32) {
        let mut hops = 0;
        loop {
            if let Some(next) = self.nodes[state as usize].table.get(c) {
                return (next, hops);
            }
            if state == ROOT {
                return (ROOT, hops);
            }
            state = self.nodes[state as usize].fail;
            hops += 1;
        }
    }

    #[inline]
    pub fn step(&self, state: u32, c: u8) -> u32 {
        self.step_counting(state, c).0
    }

    /// Pattern ids ending at `state`.
    #[inline]
    pub fn outputs(&self, state: u32) -> &[u32] {
        &self.nodes[state as usize].outputs
    }

    pub fn state_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn accounted_words(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| n.table.accounted_words() + n.outputs.len() + 1)
            .sum()
    }

    /// All occurrences of all patterns in `text` as sorted
    /// (end position, pattern id) pairs, 1-based positions. This is the
    /// ground-truth oracle for every streaming strategy.
    pub fn offline_match(patterns: &[&[u8]], text: &[u8]) -> Vec<(u64, u32)> {
        let auto = AcAutomaton::build(patterns).expect("oracle patterns must be non-empty");
        let mut state = ROOT;
        let mut out = Vec::new();
        for (i, &c) in text.iter().enumerate() {
            state = auto.step(state, c);
            for &id in auto.outputs(state) {
                out.push((i as u64 + 1, id));
            }
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Quadratic scan, independent of the automaton.
    fn naive_scan(patterns: &[&[u8]], text: &[u8]) -> Vec<(u64, u32)> {
        let mut out = Vec::new();
        for (id, p) in patterns.iter().enumerate() {
            if p.is_empty() || p.len() > text.len() {
                continue;
            }
            for end in p.len()..=text.len() {
                if &text[end - p.len()..end] == *p {
                    out.push((end as u64, id as u32));
                }
            }
        }
        out.sort_unstable();
        out
    }

    #[test]
    fn build_sizes() {
        assert_eq!(AcAutomaton::build(&[b"a"]).unwrap().state_count(), 2);
        let auto = AcAutomaton::build(&[b"he", b"she", b"his", b"hers"]).unwrap();
        assert_eq!(auto.state_count(), 10);
        assert!(AcAutomaton::build(&[]).unwrap().state_count() == 1);
        assert_eq!(
            AcAutomaton::build(&[b"" as &[u8]]).err(),
            Some(Error::EmptyPattern)
        );
    }

    #[test]
    fn ushers() {
        let pats: Vec<&[u8]> = vec![b"he", b"she", b"his", b"hers"];
        let got = AcAutomaton::offline_match(&pats, b"ushers");
        assert_eq!(got, naive_scan(&pats, b"ushers"));
        // she and he end at 4, hers at 6
        assert_eq!(got, vec![(4, 0), (4, 1), (6, 3)]);
    }

    #[test]
    fn overlapping_occurrences() {
        let pats: Vec<&[u8]> = vec![b"aa"];
        assert_eq!(AcAutomaton::offline_match(&pats, b"aaa"), vec![(2, 0), (3, 0)]);
        let pats: Vec<&[u8]> = vec![b"ab"];
        assert_eq!(AcAutomaton::offline_match(&pats, b"abab"), vec![(2, 0), (4, 0)]);
        let pats: Vec<&[u8]> = vec![b"ab", b"b"];
        assert_eq!(AcAutomaton::offline_match(&pats, b"ab"), vec![(2, 0), (2, 1)]);
        let pats: Vec<&[u8]> = vec![b"x"];
        assert!(AcAutomaton::offline_match(&pats, b"").is_empty());
    }

    #[test]
    fn no_extension_returns_root() {
        let auto = AcAutomaton::build(&[b"abc"]).unwrap();
        let (state, _) = auto.step_counting(ROOT, b'z');
        assert_eq!(state, ROOT);
        assert!(auto.outputs(state).is_empty());
    }

    #[test]
    fn matches_naive_exhaustive_tiny() {
        // all binary texts of length <= 12 against a fixed small dictionary
        let pats: Vec<&[u8]> = vec![b"a", b"ab", b"bb", b"aba"];
        for len in 0..=12usize {
            for bits in 0..(1u32 << len) {
                let text: Vec<u8> = (0..len)
                    .map(|i| if bits >> i & 1 == 1 { b'b' } else { b'a' })
                    .collect();
                assert_eq!(
                    AcAutomaton::offline_match(&pats, &text),
                    naive_scan(&pats, &text)
                );
            }
        }
    }

    #[test]
    fn matches_naive_randomised() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..50 {
            let k = rng.gen_range(1..=32);
            let pats: Vec<Vec<u8>> = (0..k)
                .map(|_| {
                    let len = rng.gen_range(1..=64);
                    (0..len).map(|_| rng.gen_range(b'a'..=b'b')).collect()
                })
                .collect();
            let refs: Vec<&[u8]> = pats.iter().map(|p| p.as_slice()).collect();
            let n = rng.gen_range(1..=10_000);
            let text: Vec<u8> = (0..n).map(|_| rng.gen_range(b'a'..=b'b')).collect();
            assert_eq!(
                AcAutomaton::offline_match(&refs, &text),
                naive_scan(&refs, &text)
            );
        }
    }

    #[test]
    fn failure_hops_amortised() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pats: Vec<&[u8]> = vec![b"aaaab", b"aab", b"abab"];
        let auto = AcAutomaton::build(&pats).unwrap();
        let n = 50_000;
        let mut state = ROOT;
        let mut hops = 0u64;
        for _ in 0..n {
            let c = rng.gen_range(b'a'..=b'b');
            let (next, h) = auto.step_counting(state, c);
            state = next;
            hops += h as u64;
        }
        assert!(hops <= 2 * n, "hops={hops}");
    }
}
