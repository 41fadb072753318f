//! Signature-searchable compacted trie over a string set, queried by
//! fingerprints alone. The exit node of a query `x` — the deepest node whose
//! extent is a prefix of `x` — is located by a fat binary search over prefix
//! signatures, probing at 2-fattest pivot depths, followed by a bounded
//! ascend/descend fixup. The search can run eagerly or be advanced a few
//! comparisons per arrival.
//!
//! Signatures are fingerprints of the *reverse* of a prefix: for a stored
//! string `s`, the signature of `s[..d]` is `fp(s[d-1] .. s[0])`. Queries are
//! reversed text windows, so every query-prefix signature is a forward
//! substring fingerprint available in O(1) from the prefix buffer.

use crate::diag::CollisionLog;
use crate::error::Error;
use crate::fptab::StaticFpTable;
use crate::krhash::FpParams;
use crate::tries::build::{CompactTrie, ROOT};

/// The integer in `(a, b]` with the most trailing zeros.
#[inline]
fn two_fattest(a: u64, b: u64) -> u64 {
    debug_assert!(a < b);
    let j = 63 - (a ^ b).leading_zeros();
    (b >> j) << j
}

#[derive(Debug)]
pub struct ZFastTrie {
    pub trie: CompactTrie,
    /// (handle signature, handle length) -> node.
    handle_map: StaticFpTable<u32>,
    /// Signature of each node's full extent.
    extent_sig: Vec<u64>,
    /// Build-time fingerprint collisions between distinct handles.
    pub build_collisions: usize,
    /// Retained strings (test mode only); enables byte-level verification.
    strings: Option<Vec<Vec<u8>>>,
}

/// Query-side context: `sig(d)` yields the signature of the query's length-d
/// prefix; `qbyte` and `log` are present in test mode only.
pub struct QueryCtx<'a> {
    pub sig: &'a mut dyn FnMut(u64) -> u64,
    pub qbyte: Option<&'a dyn Fn(u64) -> Option<u8>>,
    pub log: Option<&'a mut CollisionLog>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Search,
    Ascend,
    Descend,
    Done,
}

/// A resumable exit-node search. Opened against a fixed query; each advance
/// consumes a budget of signature comparisons.
#[derive(Debug, Clone)]
pub struct ExitSearch {
    qlen: u64,
    a: u64,
    b: u64,
    cand: u32,
    phase: Phase,
    /// Signature comparisons spent so far (equals the eager cost when done).
    pub comparisons: u32,
    result: Option<u32>,
}

impl ExitSearch {
    pub fn result(&self) -> Option<u32> {
        self.result
    }
}

impl ZFastTrie {
    /// Builds the trie over `strings` (already in trie orientation, i.e.
    /// reversed heads; duplicates allowed). `retain` keeps the strings for
    /// collision verification.
    pub fn build(strings: Vec<Vec<u8>>, params: &FpParams, retain: bool) -> Self {
        let trie = CompactTrie::build(&strings);
        // reverse-prefix signatures per string, then per node
        let mut extent_sig = vec![0u64; trie.len()];
        let mut handle_pairs = Vec::new();
        // sig(d+1) = r*sig(d) + s[d]*r
        let r = params.base();
        let p = params.modulus();
        let mulr = |v: u64| ((v as u128 * r as u128) % p as u128) as u64;
        let mut sigs_of: Vec<Vec<u64>> = Vec::with_capacity(strings.len());
        for s in &strings {
            let mut sigs = Vec::with_capacity(s.len() + 1);
            sigs.push(0u64);
            let mut cur = 0u64;
            for &c in s {
                cur = (mulr(cur) + mulr(c as u64)) % p;
                sigs.push(cur);
            }
            sigs_of.push(sigs);
        }
        for (id, node) in trie.nodes.iter().enumerate().skip(1) {
            let sigs = &sigs_of[node.repr as usize];
            extent_sig[id] = sigs[node.elen as usize];
            let plen = trie.nodes[node.parent as usize].elen;
            let handle = two_fattest(plen, node.elen);
            handle_pairs.push(((sigs[handle as usize], handle), id as u32));
        }
        let (handle_map, build_collisions) = StaticFpTable::build(handle_pairs);
        ZFastTrie {
            trie,
            handle_map,
            extent_sig,
            build_collisions,
            strings: if retain { Some(strings) } else { None },
        }
    }

    pub fn open_search(&self, qlen: u64) -> ExitSearch {
        let b = qlen.min(self.trie.max_extent);
        ExitSearch {
            qlen,
            a: 0,
            b,
            cand: ROOT,
            phase: if b == 0 { Phase::Ascend } else { Phase::Search },
            comparisons: 0,
            result: None,
        }
    }

    /// Eager exit-node query; returns the node and the comparison count.
    pub fn exit_node(&self, qlen: u64, ctx: &mut QueryCtx<'_>, params: &FpParams) -> (u32, u32) {
        let mut s = self.open_search(qlen);
        let node = self
            .advance(&mut s, ctx, params, u32::MAX)
            .expect("fresh search")
            .expect("unbounded budget completes");
        (node, s.comparisons)
    }

    /// Advances a search by at most `budget` comparisons; returns the exit
    /// node once the search completes. Stepping an already-finished search
    /// is an error.
    pub fn advance(
        &self,
        s: &mut ExitSearch,
        ctx: &mut QueryCtx<'_>,
        params: &FpParams,
        budget: u32,
    ) -> Result<Option<u32>, Error> {
        if s.result.is_some() {
            return Err(Error::ClassViolation(
                "exit-node search already completed".into(),
            ));
        }
        let mut left = budget;
        loop {
            match s.phase {
                Phase::Search => {
                    if s.a >= s.b {
                        s.phase = Phase::Ascend;
                        continue;
                    }
                    if left == 0 {
                        return Ok(None);
                    }
                    let f = two_fattest(s.a, s.b);
                    let sig = (ctx.sig)(f);
                    s.comparisons += 1;
                    left -= 1;
                    match self.handle_map.get(sig, f) {
                        Some(&node) => {
                            self.verify(ctx, node, f, "exit-search probe");
                            s.cand = node;
                            s.a = self.trie.extent_len(node);
                        }
                        None => {
                            s.b = f - 1;
                        }
                    }
                }
                Phase::Ascend => {
                    if s.cand == ROOT {
                        s.phase = Phase::Descend;
                        continue;
                    }
                    if left == 0 {
                        return Ok(None);
                    }
                    let e = self.trie.extent_len(s.cand);
                    s.comparisons += 1;
                    left -= 1;
                    if e <= s.qlen && (ctx.sig)(e) == self.extent_sig[s.cand as usize] {
                        self.verify(ctx, s.cand, e, "exit-search ascend");
                        s.phase = Phase::Descend;
                    } else {
                        s.cand = self.trie.parent(s.cand);
                    }
                }
                Phase::Descend => {
                    let e = self.trie.extent_len(s.cand);
                    if e + 1 > s.qlen || self.trie.nodes[s.cand as usize].children.is_empty() {
                        s.phase = Phase::Done;
                        continue;
                    }
                    if left < 2 {
                        if left == 0 {
                            return Ok(None);
                        }
                        // allow a one-unit overrun so the step is atomic
                        left = 2;
                    }
                    s.comparisons += 2;
                    left -= 2;
                    // recover the next query byte from two adjacent signatures
                    let p = params.modulus();
                    let s_e = (ctx.sig)(e) as u128;
                    let s_e1 = (ctx.sig)(e + 1) as u128;
                    let byte = (s_e1 * params.base_inv() as u128 % p as u128 + p as u128
                        - s_e % p as u128)
                        % p as u128;
                    let next = if byte < 256 {
                        self.trie.child(s.cand, byte as u8)
                    } else {
                        None
                    };
                    match next {
                        Some(child)
                            if self.trie.extent_len(child) <= s.qlen
                                && (ctx.sig)(self.trie.extent_len(child))
                                    == self.extent_sig[child as usize] =>
                        {
                            self.verify(ctx, child, self.trie.extent_len(child), "exit-search descend");
                            s.cand = child;
                        }
                        _ => {
                            s.phase = Phase::Done;
                        }
                    }
                }
                Phase::Done => {
                    s.result = Some(s.cand);
                    return Ok(Some(s.cand));
                }
            }
        }
    }

    /// Test-mode byte verification of a positive signature comparison.
    fn verify(&self, ctx: &mut QueryCtx<'_>, node: u32, prefix_len: u64, site: &'static str) {
        let (Some(strings), Some(qb)) = (&self.strings, ctx.qbyte) else {
            return;
        };
        let n = &self.trie.nodes[node as usize];
        let stored = &strings[n.repr as usize][..prefix_len as usize];
        let equal = stored
            .iter()
            .enumerate()
            .all(|(i, &c)| qb(i as u64) == Some(c));
        if !equal {
            if let Some(log) = ctx.log.as_deref_mut() {
                log.record(site);
            }
        }
    }

    /// Extent of a node as a byte string (test mode only).
    pub fn extent_bytes(&self, node: u32) -> Option<Vec<u8>> {
        let strings = self.strings.as_ref()?;
        let n = &self.trie.nodes[node as usize];
        Some(strings[n.repr as usize][..n.elen as usize].to_vec())
    }

    pub fn accounted_words(&self) -> usize {
        self.trie.accounted_words() + self.handle_map.accounted_words() + self.extent_sig.len()
    }

    /// Eager query with signatures computed from an in-memory query string;
    /// convenience for preprocessing and tests.
    pub fn exit_node_of_bytes(&self, query: &[u8], params: &FpParams) -> (u32, u32) {
        let mut sigs = Vec::with_capacity(query.len() + 1);
        sigs.push(0u64);
        let p = params.modulus();
        let r = params.base();
        let mut cur = 0u64;
        for &c in query {
            cur = ((cur as u128 * r as u128 + c as u128 * r as u128) % p as u128) as u64;
            sigs.push(cur);
        }
        let mut sig = |d: u64| sigs[d as usize];
        let mut ctx = QueryCtx {
            sig: &mut sig,
            qbyte: None,
            log: None,
        };
        self.exit_node(query.len() as u64, &mut ctx, params)
    }
}
