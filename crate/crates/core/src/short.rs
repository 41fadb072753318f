//! Strategy for short patterns (length bounded by a small multiple of the
//! anchor block). Very short patterns (at most twice the rounded log of the
//! maximum pattern length) go straight through an Aho-Corasick automaton.
//! Every other pattern is split, for each tail length `l` in `(L, 2L]`, into
//! a head and a tail of length `l`; reversed heads populate a
//! signature-searchable trie whose head nodes carry the fingerprint of the
//! matching tail as a colour.
//!
//! Every `L` arrivals the trie is queried with the reversed recent window;
//! the query is de-amortised over the following `L` arrivals, and its exit
//! node serves the tail checks of the `L` arrivals after that: an arrival at
//! distance `l` in `(L, 2L]` past an anchor matches some pattern iff the
//! coloured-ancestor query of the window fingerprint on the anchor's exit
//! node is defined.

use crate::ac::{self, AcAutomaton};
use crate::diag::TestHooks;
use crate::engine::Hit;
use crate::error::Error;
use crate::krhash::{FpParams, PrefixFpBuffer};
use crate::tries::{ColorOverlay, ExitSearch, QueryCtx, ZFastTrie};
use std::collections::HashMap;

/// Upper bound on exit-search comparisons, exposed to the resource tests.
pub fn search_cost_bound(max_extent: u64) -> u32 {
    let bits = 64 - max_extent.max(2).leading_zeros();
    4 * (bits + 3)
}

#[derive(Debug)]
pub struct ShortPlan {
    pub log_m: usize,
    pub cap: usize,
    ac: AcAutomaton,
    ac_ids: Vec<u32>,
    ac_lens: Vec<u32>,
    trie: ZFastTrie,
    overlay: ColorOverlay,
    /// (head node, colour id) -> (pattern id, pattern length)
    by_split: HashMap<(u32, u32), (u32, u32)>,
    /// Per-arrival budget of exit-search comparisons.
    budget: u32,
    has_heads: bool,
    /// Test mode: full pattern bytes per (node, colour) for emit checks.
    retained: Option<HashMap<(u32, u32), Vec<u8>>>,
}

#[derive(Debug)]
pub struct ShortState {
    ac_state: u32,
    /// Completed exit nodes of the two most recent anchors (anchor, node).
    exits: [(u64, u32); 2],
    session: Option<(u64, ExitSearch)>,
    hits: Vec<Hit>,
    /// Sessions that missed their de-amortisation deadline (kept at 0).
    pub overruns: u64,
    pub max_session_cost: u32,
}

impl ShortPlan {
    /// Splits and indexes `patterns` (pairs of dictionary id and bytes).
    /// Every pattern must have length in `[1, cap]`.
    pub fn build(
        patterns: &[(u32, Vec<u8>)],
        params: &FpParams,
        log_m: usize,
        cap: usize,
        retain: bool,
    ) -> Result<Self, Error> {
        let l = log_m;
        let mut ac_pats: Vec<&[u8]> = Vec::new();
        let mut ac_ids = Vec::new();
        let mut ac_lens = Vec::new();
        let mut heads: Vec<Vec<u8>> = Vec::new();
        let mut tails: Vec<(u32, u32, Vec<u8>)> = Vec::new(); // (pattern id, len, tail)
        for (id, p) in patterns {
            if p.is_empty() {
                return Err(Error::EmptyPattern);
            }
            if p.len() > cap {
                return Err(Error::ClassViolation(format!(
                    "short strategy holds lengths <= {cap}, got {}",
                    p.len()
                )));
            }
            if p.len() <= 2 * l {
                ac_pats.push(p);
                ac_ids.push(*id);
                ac_lens.push(p.len() as u32);
            } else {
                for tail_len in (l + 1)..=(2 * l).min(p.len() - 1) {
                    let split = p.len() - tail_len;
                    heads.push(p[..split].iter().rev().copied().collect());
                    tails.push((*id, p.len() as u32, p[split..].to_vec()));
                }
            }
        }
        let ac = AcAutomaton::build(&ac_pats)?;
        let has_heads = !heads.is_empty();
        let trie = ZFastTrie::build(heads, params, retain);
        let mut overlay = ColorOverlay::new();
        let mut split_fps = Vec::with_capacity(tails.len());
        for (i, (_, _, tail)) in tails.iter().enumerate() {
            let fp = params.fp_of(tail);
            overlay.mark(trie.trie.node_of[i], fp)?;
            split_fps.push(fp);
        }
        overlay.freeze(&trie.trie);
        let mut by_split = HashMap::new();
        let mut retained = retain.then(HashMap::new);
        for (i, (id, plen, tail)) in tails.iter().enumerate() {
            let node = trie.trie.node_of[i];
            let cid = overlay.intern(split_fps[i]).expect("marked colour");
            by_split.entry((node, cid)).or_insert((*id, *plen));
            if let Some(r) = retained.as_mut() {
                r.entry((node, cid)).or_insert_with(|| {
                    let mut pat = trie.extent_bytes(node).expect("retained");
                    pat.reverse();
                    pat.extend_from_slice(tail);
                    pat
                });
            }
        }
        let budget = (search_cost_bound(trie.trie.max_extent) + l as u32 - 1) / l as u32;
        Ok(ShortPlan {
            log_m: l,
            cap,
            ac,
            ac_ids,
            ac_lens,
            trie,
            overlay,
            by_split,
            budget,
            has_heads,
            retained,
        })
    }

    pub fn new_state(&self) -> ShortState {
        ShortState {
            ac_state: ac::ROOT,
            exits: [(0, 0), (0, 0)],
            session: None,
            hits: Vec::new(),
            overruns: 0,
            max_session_cost: 0,
        }
    }

    /// The window the shared prefix buffer must retain for this plan.
    pub fn window_need(&self) -> usize {
        self.cap + 2
    }

    /// Processes one arrival. `buf` has already consumed the character (its
    /// position is the current index); `c` is that character. Returns every
    /// match ending here, AC path first.
    pub fn arrive(
        &self,
        state: &mut ShortState,
        c: u8,
        buf: &PrefixFpBuffer,
        params: &FpParams,
        mut hooks: Option<&mut TestHooks>,
        heavy: &mut u32,
    ) -> Vec<Hit> {
        let pos = buf.position();
        let l = self.log_m as u64;
        state.hits.clear();

        let (next, hops) = self.ac.step_counting(state.ac_state, c);
        state.ac_state = next;
        *heavy += 1 + hops;
        for &pid in self.ac.outputs(next) {
            state.hits.push(Hit {
                pos,
                id: self.ac_ids[pid as usize],
                len: self.ac_lens[pid as usize],
            });
        }

        if self.has_heads {
            self.step_session(state, buf, params, hooks.as_deref_mut(), heavy);
            if pos % l == 0 {
                let qlen = pos.min(self.trie.trie.max_extent);
                state.session = Some((pos, self.trie.open_search(qlen)));
            }
            self.check_tail(state, buf, params, hooks, heavy);
        }
        state.hits.clone()
    }

    /// Longest pattern matching at the current position, if any.
    pub fn longest_this_arrival(&self, state: &ShortState) -> Option<Hit> {
        state.hits.iter().max_by_key(|h| h.len).copied()
    }

    fn step_session(
        &self,
        state: &mut ShortState,
        buf: &PrefixFpBuffer,
        params: &FpParams,
        hooks: Option<&mut TestHooks>,
        heavy: &mut u32,
    ) {
        let Some((anchor, mut search)) = state.session.take() else {
            return;
        };
        let pos = buf.position();
        let deadline = pos >= anchor + self.log_m as u64;
        let before = search.comparisons;
        let mut text_log = hooks.map(|h| (&h.text, &mut h.log));
        let mut sig = |d: u64| {
            if d == 0 {
                return 0;
            }
            match buf.substring_fp(anchor - d + 1, anchor, params) {
                Ok(fp) => fp.value,
                Err(_) => {
                    debug_assert!(false, "session signature evicted");
                    0
                }
            }
        };
        let qbyte_text = text_log.as_ref().map(|(t, _)| *t);
        let qbyte = qbyte_text.map(|t| {
            move |i: u64| {
                let idx = anchor.checked_sub(i + 1)?;
                t.get(idx as usize).copied()
            }
        });
        let qbyte_dyn: Option<&dyn Fn(u64) -> Option<u8>> =
            qbyte.as_ref().map(|f| f as &dyn Fn(u64) -> Option<u8>);
        let mut ctx = QueryCtx {
            sig: &mut sig,
            qbyte: qbyte_dyn,
            log: text_log.as_mut().map(|(_, l)| &mut **l),
        };
        let mut done = self
            .trie
            .advance(&mut search, &mut ctx, params, self.budget)
            .expect("open session");
        if deadline && done.is_none() {
            state.overruns += 1;
            done = self
                .trie
                .advance(&mut search, &mut ctx, params, u32::MAX)
                .expect("open session");
        }
        *heavy += search.comparisons - before;
        match done {
            Some(node) => {
                state.max_session_cost = state.max_session_cost.max(search.comparisons);
                state.exits = [(anchor, node), state.exits[0]];
            }
            None => state.session = Some((anchor, search)),
        }
    }

    fn check_tail(
        &self,
        state: &mut ShortState,
        buf: &PrefixFpBuffer,
        params: &FpParams,
        hooks: Option<&mut TestHooks>,
        heavy: &mut u32,
    ) {
        let pos = buf.position();
        let l = self.log_m as u64;
        if pos <= l {
            return;
        }
        let anchor = (pos - l - 1) / l * l;
        let exit = if anchor == 0 {
            0
        } else {
            match state.exits.iter().find(|&&(a, _)| a == anchor) {
                Some(&(_, node)) => node,
                None => {
                    debug_assert!(false, "anchor {anchor} has no completed exit node");
                    return;
                }
            }
        };
        debug_assert!(pos - anchor > l && pos - anchor <= 2 * l);
        let Ok(fp) = buf.substring_fp(anchor + 1, pos, params) else {
            debug_assert!(false, "tail window evicted");
            return;
        };
        *heavy += 2; // colour intern + ancestor query
        let Some(cid) = self.overlay.intern(fp) else {
            return;
        };
        if let Some(node) = self.overlay.find(exit, cid) {
            let &(id, len) = self
                .by_split
                .get(&(node, cid))
                .expect("coloured node has a split entry");
            if let (Some(h), Some(r)) = (hooks, self.retained.as_ref()) {
                if let Some(bytes) = r.get(&(node, cid)) {
                    h.check_window(pos + 1 - len as u64, pos, bytes, "short trie match");
                }
            }
            state.hits.push(Hit { pos, id, len });
        }
    }

    pub fn accounted_words(&self) -> usize {
        self.ac.accounted_words()
            + self.ac_ids.len() * 2
            + self.trie.accounted_words()
            + self.overlay.accounted_words()
            + self.by_split.len() * 4
    }
}
