//! Compacted trie construction. Nodes are the root, every branching point,
//! and the end of every inserted string; edge labels are implicit (a node
//! stores its extent length plus a representative string id, so the extent is
//! the representative's prefix of that length).

use std::collections::HashMap;

pub const ROOT: u32 = 0;

#[derive(Debug, Clone)]
pub struct Node {
    pub parent: u32,
    /// Length of the string spelled from the root to this node.
    pub elen: u64,
    /// Id of one inserted string having the extent as a prefix.
    pub repr: u32,
    /// First byte of the edge from the parent (unused at the root).
    pub branch: u8,
    /// Children sorted by branch byte.
    pub children: Vec<(u8, u32)>,
}

#[derive(Debug, Clone)]
pub struct CompactTrie {
    pub nodes: Vec<Node>,
    /// For each inserted string, the node whose extent equals it.
    pub node_of: Vec<u32>,
    pub max_extent: u64,
}

impl CompactTrie {
    /// Builds the compacted trie of `strings`. Duplicate strings map to the
    /// same node.
    pub fn build(strings: &[Vec<u8>]) -> Self {
        // uncompacted trie
        struct U {
            next: HashMap<u8, u32>,
            repr: u32,
            depth: u32,
            end: bool,
        }
        let mut un: Vec<U> = vec![U {
            next: HashMap::new(),
            repr: 0,
            depth: 0,
            end: false,
        }];
        let mut end_node = vec![0u32; strings.len()];
        for (id, s) in strings.iter().enumerate() {
            let mut at = 0u32;
            for (d, &c) in s.iter().enumerate() {
                at = match un[at as usize].next.get(&c) {
                    Some(&n) => n,
                    None => {
                        let n = un.len() as u32;
                        un.push(U {
                            next: HashMap::new(),
                            repr: id as u32,
                            depth: d as u32 + 1,
                            end: false,
                        });
                        un[at as usize].next.insert(c, n);
                        n
                    }
                };
            }
            un[at as usize].end = true;
            end_node[id] = at;
        }

        // keep root, string ends, and branching nodes
        let keep = |u: &U, is_root: bool| is_root || u.end || u.next.len() >= 2;

        let mut nodes = vec![Node {
            parent: ROOT,
            elen: 0,
            repr: 0,
            branch: 0,
            children: Vec::new(),
        }];
        let mut compact_of: HashMap<u32, u32> = HashMap::new();
        compact_of.insert(0, ROOT);
        let mut max_extent = 0;

        // DFS carrying the nearest kept ancestor
        let mut stack: Vec<(u32, u32, u8)> = un[0]
            .next
            .iter()
            .map(|(&c, &n)| (n, ROOT, c))
            .collect();
        stack.sort_by_key(|&(_, _, c)| std::cmp::Reverse(c));
        while let Some((u, kept_parent, branch)) = stack.pop() {
            let parent_for_kids;
            let branch_for_kids;
            if keep(&un[u as usize], false) {
                let id = nodes.len() as u32;
                let elen = un[u as usize].depth as u64;
                nodes.push(Node {
                    parent: kept_parent,
                    elen,
                    repr: un[u as usize].repr,
                    branch,
                    children: Vec::new(),
                });
                nodes[kept_parent as usize].children.push((branch, id));
                compact_of.insert(u, id);
                max_extent = max_extent.max(elen);
                parent_for_kids = id;
                branch_for_kids = None;
            } else {
                parent_for_kids = kept_parent;
                branch_for_kids = Some(branch);
            }
            for (&c, &n) in &un[u as usize].next {
                stack.push((n, parent_for_kids, branch_for_kids.unwrap_or(c)));
            }
        }
        for n in &mut nodes {
            n.children.sort_by_key(|&(c, _)| c);
        }

        let node_of = end_node
            .iter()
            .map(|u| compact_of[u])
            .collect();
        CompactTrie {
            nodes,
            node_of,
            max_extent,
        }
    }

    #[inline]
    pub fn child(&self, node: u32, byte: u8) -> Option<u32> {
        let kids = &self.nodes[node as usize].children;
        kids.binary_search_by_key(&byte, |&(c, _)| c)
            .ok()
            .map(|i| kids[i].1)
    }

    #[inline]
    pub fn parent(&self, node: u32) -> u32 {
        self.nodes[node as usize].parent
    }

    #[inline]
    pub fn extent_len(&self, node: u32) -> u64 {
        self.nodes[node as usize].elen
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Entry/exit numbering of a DFS over the trie: `v` is an ancestor-or-self
    /// of `u` iff `tin[v] <= tin[u] <= tout[v]`.
    pub fn dfs_intervals(&self) -> (Vec<u32>, Vec<u32>) {
        let mut tin = vec![0u32; self.nodes.len()];
        let mut tout = vec![0u32; self.nodes.len()];
        let mut clock = 0u32;
        // (node, next child index)
        let mut stack = vec![(ROOT, 0usize)];
        tin[ROOT as usize] = 0;
        while let Some(&mut (n, ref mut ci)) = stack.last_mut() {
            if *ci == 0 {
                tin[n as usize] = clock;
            }
            if *ci < self.nodes[n as usize].children.len() {
                let child = self.nodes[n as usize].children[*ci].1;
                *ci += 1;
                stack.push((child, 0));
                clock += 1;
            } else {
                tout[n as usize] = clock;
                stack.pop();
            }
        }
        (tin, tout)
    }

    pub fn accounted_words(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| 4 + n.children.len())
            .sum::<usize>()
            + self.node_of.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn extent(trie: &CompactTrie, strings: &[Vec<u8>], node: u32) -> Vec<u8> {
        let n = &trie.nodes[node as usize];
        strings[n.repr as usize][..n.elen as usize].to_vec()
    }

    #[test]
    fn small_trie_shape() {
        let strings: Vec<Vec<u8>> = vec![b"ab".to_vec(), b"abc".to_vec(), b"b".to_vec()];
        let t = CompactTrie::build(&strings);
        // root, "ab", "abc", "b" — "a" is unary and not an end, so elided
        assert_eq!(t.len(), 4);
        assert_eq!(extent(&t, &strings, t.node_of[0]), b"ab");
        assert_eq!(extent(&t, &strings, t.node_of[1]), b"abc");
        assert_eq!(extent(&t, &strings, t.node_of[2]), b"b");
        assert_eq!(t.parent(t.node_of[1]), t.node_of[0]);
        assert_eq!(t.max_extent, 3);
    }

    #[test]
    fn branching_without_end_is_kept() {
        let strings: Vec<Vec<u8>> = vec![b"ax".to_vec(), b"ay".to_vec()];
        let t = CompactTrie::build(&strings);
        // root, "a" (branching), "ax", "ay"
        assert_eq!(t.len(), 4);
        let ax = t.node_of[0];
        let a = t.parent(ax);
        assert_eq!(t.extent_len(a), 1);
        assert_eq!(t.child(a, b'x'), Some(ax));
    }

    #[test]
    fn duplicates_collapse() {
        let strings: Vec<Vec<u8>> = vec![b"ab".to_vec(), b"ab".to_vec()];
        let t = CompactTrie::build(&strings);
        assert_eq!(t.node_of[0], t.node_of[1]);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn dfs_intervals_nest() {
        let strings: Vec<Vec<u8>> = vec![b"ab".to_vec(), b"abc".to_vec(), b"abd".to_vec()];
        let t = CompactTrie::build(&strings);
        let (tin, tout) = t.dfs_intervals();
        let ab = t.node_of[0] as usize;
        let abc = t.node_of[1] as usize;
        assert!(tin[ab] <= tin[abc] && tin[abc] <= tout[ab]);
        assert!(tin[ROOT as usize] == 0 && tout[ROOT as usize] as usize >= t.len() - 1);
    }
}
