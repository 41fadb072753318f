//! Strategy for long patterns whose body has a long period, so occurrences
//! are sparse. Each pattern contributes a ladder of power-of-two prefixes
//! (rungs). Matches of a rung within twice its length form an arithmetic
//! progression with difference equal to the rung's period, so active matches
//! compress into five words.
//!
//! The fast engine seeds the ladder with two sub-engines — the periodic
//! strategy in longest-match mode over each pattern's largest short-period
//! rung, and the short strategy over one long-period rung per pattern that
//! lacks such a seed — then extends matches rung by rung with two round-robin
//! processes, one fingerprint comparison each. Rung matches reach the top of
//! the ladder, are extended to full pattern stems, and sit in a pending ring
//! for up to `block` arrivals until the pattern's tail window arrives; a
//! coloured-ancestor query over the compacted trie of reversed stems then
//! reports the longest finished pattern with zero delay.
//!
//! A reference engine walks every ladder level each arrival (doubling the
//! front match of each level and testing the grown fingerprint against a
//! prefix table). It reports identical events at higher per-arrival cost and
//! anchors the equivalence tests.

use crate::diag::TestHooks;
use crate::engine::Hit;
use crate::error::Error;
use crate::fptab::StaticFpTable;
use crate::krhash::{Fingerprint, FpParams, PrefixFpBuffer};
use crate::periodic::{PeriodicPlan, PeriodicState, ReportMode};
use crate::short::{ShortPlan, ShortState};
use crate::stringology::{is_suffix, period_of};
use crate::tries::CompactQTrie;
use std::collections::{BinaryHeap, HashMap, VecDeque};

const PROG_SLOTS: usize = 2;
const PENDING_QUEUE_CAP: usize = 256;

/// Active matches of one string compressed as an arithmetic progression of
/// end positions `first, first+period, ..., last`, with enough fingerprint
/// data to recover the stream prefix fingerprint at any member.
#[derive(Debug, Clone, Copy)]
pub struct MatchProgression {
    pub first: u64,
    /// Fingerprint of `t_1..t_first`.
    pub first_prefix_fp: Fingerprint,
    /// Fingerprint of the period string (the last `period` characters of
    /// the matched string).
    pub period_fp: Fingerprint,
    pub period: u64,
    pub last: u64,
    /// Members at or before this position already had their doubling probe
    /// (reference engine bookkeeping).
    probed_through: u64,
}

impl MatchProgression {
    fn new(pos: u64, prefix_fp: Fingerprint, period_fp: Fingerprint, period: u64) -> Self {
        MatchProgression {
            first: pos,
            first_prefix_fp: prefix_fp,
            period_fp,
            period,
            last: pos,
            probed_through: 0,
        }
    }

    pub fn count(&self) -> u64 {
        (self.last - self.first) / self.period + 1
    }

    pub fn contains(&self, pos: u64) -> bool {
        pos >= self.first && pos <= self.last && (pos - self.first) % self.period == 0
    }

    /// Members in the half-open span `(from, to]`.
    fn members_in(&self, from: u64, to: u64) -> u64 {
        let lo = from.max(self.first.saturating_sub(self.period));
        let hi = to.min(self.last);
        if hi <= lo {
            return 0;
        }
        let first_after = if self.first > lo {
            self.first
        } else {
            lo + self.period - (lo - self.first) % self.period
        };
        if first_after > hi {
            0
        } else {
            (hi - first_after) / self.period + 1
        }
    }

    /// Fingerprint of `t_1..member` for a progression member.
    pub fn prefix_fp_at(&self, member: u64, params: &FpParams) -> Fingerprint {
        debug_assert!(self.contains(member));
        let t = (member - self.first) / self.period;
        params.concat(self.first_prefix_fp, params.repeat(self.period_fp, t))
    }

    /// The r-th last member (r = 1 is the last), if the progression has
    /// that many.
    pub fn rth_last(&self, r: u64) -> Option<u64> {
        if r == 0 || self.count() < r {
            return None;
        }
        Some(self.last - (r - 1) * self.period)
    }
}

/// One power-of-two prefix shared by every pattern that starts with it.
#[derive(Debug)]
struct Rung {
    len: u64,
    period: u64,
    fp: Fingerprint,
    /// Fingerprint of the last `period` characters.
    period_fp: Fingerprint,
    /// Rung id of the first half (for lengths > 1).
    pred: Option<u32>,
    /// Fingerprint of the second half.
    second_half_fp: Fingerprint,
    /// Consecutive same-chain occurrences of the first half inside this rung
    /// ending past its midpoint: the candidate filter for extensions out of
    /// a short-period predecessor progression.
    chain_r: u64,
    long_period: bool,
    /// Progression slot recycling horizon.
    horizon: u64,
    tracked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Seed {
    ShortPeriod(u32),
    LongPeriod(u32),
}

#[derive(Debug)]
struct Pattern {
    id: u32,
    len: u64,
    stem_len: u64,
    top: u32,
    /// `stem_len - top rung length`; at least `block` by construction.
    delta: u64,
    /// Fingerprint of the stem beyond the top rung.
    ext_fp: Fingerprint,
    /// Same-chain occurrences of the top rung inside the stem past the top
    /// rung's end.
    chain_r: u64,
    /// Fast-mode seed; absent only in reference mode.
    seed: Option<Seed>,
    /// Fingerprint of the pattern beyond the top rung (reference engine).
    whole_ext_fp: Fingerprint,
    tail_fp: Fingerprint,
}

#[derive(Debug, Default)]
struct ChainLink {
    rung: u32,
    /// Long-period rungs whose first half is this link's rung.
    succs: Vec<u32>,
    /// Patterns whose top rung is this link's rung (stem extension happens
    /// here, where the walk's working progression is available).
    tops: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparseMode {
    Fast,
    Reference,
}

#[derive(Debug)]
pub struct SparsePlan {
    pub block: usize,
    mode: SparseMode,
    rungs: Vec<Rung>,
    pats: Vec<Pattern>,
    seed_short: Option<PeriodicPlan>,
    seed_long: Option<ShortPlan>,
    /// Per long-seed rung: tracked proper suffixes also seeded long.
    long_suffixes: Vec<Vec<u32>>,
    long_seed_index: HashMap<u32, u32>,
    p1: Vec<u32>,
    chains: Vec<Vec<ChainLink>>,
    /// Flattened (chain, link) schedule for the second process.
    p2_order: Vec<(u32, u32)>,
    /// Patterns whose top rung is long-period (stem extension by round
    /// robin).
    qext: Vec<u32>,
    /// Round-robin steps per arrival so every list entry is visited within
    /// `block` arrivals: 1 when thresholds are natural (list lengths are at
    /// most the block), larger only under test overrides.
    p1_steps: u32,
    p2_steps: u32,
    qext_steps: u32,
    queue_steps: u32,
    qtrie: CompactQTrie,
    by_mark: HashMap<(u32, u32), u32>,
    /// Reference engine: (fingerprint, len) of every rung and whole pattern.
    level_table: Option<StaticFpTable<HEntry>>,
    max_level: u32,
    pub build_collisions: usize,
    retained: Option<Vec<Vec<u8>>>,
}

#[derive(Debug, Clone, Copy, Default)]
struct HEntry {
    rung: Option<u32>,
    pattern: Option<u32>,
}

/// Cyclic scheduler: `tick` visits list positions round robin.
#[derive(Debug, Default, Clone)]
pub struct RoundRobin {
    len: usize,
    pos: usize,
}

impl RoundRobin {
    pub fn new(len: usize) -> Self {
        RoundRobin { len, pos: 0 }
    }

    pub fn tick(&mut self) -> Option<usize> {
        if self.len == 0 {
            return None;
        }
        let at = self.pos;
        self.pos = (self.pos + 1) % self.len;
        Some(at)
    }
}

#[derive(Debug)]
pub struct SparseState {
    progs: Vec<[Option<MatchProgression>; PROG_SLOTS]>,
    seed_short: Option<PeriodicState>,
    seed_long: Option<ShortState>,
    /// Deferred suffix updates from long-seed hits: (seed index, position,
    /// next suffix to apply).
    suffix_queue: VecDeque<(u32, u64, u32)>,
    p1_rr: RoundRobin,
    p2_rr: RoundRobin,
    /// Working progression of the chain walk, reloaded as the walk moves.
    walk: Option<(u32, MatchProgression)>,
    qext_rr: RoundRobin,
    pending: Vec<Option<(u64, u32, u64)>>, // (due, stem trie node, stem len)
    hits: Vec<Hit>,
    // reference engine
    heaps: Vec<BinaryHeap<std::cmp::Reverse<(u64, u32)>>>,
    pub stats: SparseStats,
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SparseStats {
    pub evicted_progressions: u64,
    pub extension_verifies: u64,
    pub queue_overflow: u64,
    pub max_progressions_per_rung: u32,
}

impl SparsePlan {
    /// True when the doubling ladder of a pattern of this length contains a
    /// seed rung (a power of two in `[2*block, len - 2*block]`). Patterns
    /// without one are handled by the short strategy instead.
    pub fn has_seed_rung(len: usize, block: usize) -> bool {
        if len < 4 * block {
            return false;
        }
        let mut p = 1usize;
        while p < 2 * block {
            p *= 2;
        }
        p <= len - 2 * block
    }

    pub fn build(
        patterns: &[(u32, Vec<u8>)],
        params: &FpParams,
        block: usize,
        log_m: usize,
        mode: SparseMode,
        retain: bool,
    ) -> Result<Self, Error> {
        let bl = block as u64;
        let mut rungs: Vec<Rung> = Vec::new();
        let mut rung_bytes: Vec<Vec<u8>> = Vec::new();
        let mut rung_of: HashMap<Vec<u8>, u32> = HashMap::new();
        let intern_rung = |bytes: &[u8],
                               rungs: &mut Vec<Rung>,
                               rung_bytes: &mut Vec<Vec<u8>>,
                               rung_of: &mut HashMap<Vec<u8>, u32>|
         -> Result<u32, Error> {
            if let Some(&r) = rung_of.get(bytes) {
                return Ok(r);
            }
            let period = period_of(bytes)?.period as u64;
            let id = rungs.len() as u32;
            rungs.push(Rung {
                len: bytes.len() as u64,
                period,
                fp: params.fp_of(bytes),
                period_fp: params.fp_of(&bytes[bytes.len() - period as usize..]),
                pred: None,
                second_half_fp: params.fp_of(&bytes[bytes.len() / 2..]),
                chain_r: 0,
                long_period: period >= bl,
                horizon: 0,
                tracked: false,
            });
            rung_bytes.push(bytes.to_vec());
            rung_of.insert(bytes.to_vec(), id);
            Ok(id)
        };

        let mut pats = Vec::new();
        let mut ladders: Vec<Vec<u32>> = Vec::new();
        for (id, p) in patterns {
            if p.len() <= 2 * block {
                return Err(Error::ClassViolation(format!(
                    "sparse strategy needs length > {}, got {}",
                    2 * block,
                    p.len()
                )));
            }
            let stem = &p[..p.len() - block];
            let stem_period = period_of(stem)?.period;
            if stem_period < block {
                return Err(Error::ClassViolation(
                    "stem period shorter than the block belongs to the periodic strategy".into(),
                ));
            }
            let mut ladder = Vec::new();
            let mut len = 1usize;
            while len <= p.len() - 2 * block {
                ladder.push(intern_rung(&p[..len], &mut rungs, &mut rung_bytes, &mut rung_of)?);
                len *= 2;
            }
            debug_assert!(!ladder.is_empty());
            ladders.push(ladder.clone());
            let top = *ladder.last().unwrap();
            let top_len = rungs[top as usize].len;
            let stem_len = stem.len() as u64;
            pats.push(Pattern {
                id: *id,
                len: p.len() as u64,
                stem_len,
                top,
                delta: stem_len - top_len,
                ext_fp: params.fp_of(&stem[top_len as usize..]),
                chain_r: chain_occurrences(&p[..stem.len()], &rung_bytes[top as usize]),
                seed: None, // fixed below
                whole_ext_fp: params.fp_of(&p[top_len as usize..]),
                tail_fp: params.fp_of(&p[p.len() - block..]),
            });
        }

        // predecessor links and per-rung chain counts
        for i in 0..rungs.len() {
            if rungs[i].len > 1 {
                let half = &rung_bytes[i][..rungs[i].len as usize / 2];
                rungs[i].pred = rung_of.get(half).copied();
                if let Some(pr) = rungs[i].pred {
                    rungs[i].chain_r = chain_occurrences(&rung_bytes[i], &rung_bytes[pr as usize]);
                }
            }
        }

        // seeds: largest short-period rung in the window, else the smallest
        // long-period rung of length >= 2*block
        let mut d1_set: Vec<u32> = Vec::new();
        let mut d2_set: Vec<u32> = Vec::new();
        for (pi, ladder) in ladders.iter().enumerate() {
            let pat_len = pats[pi].len;
            let eligible = |r: &Rung| r.len >= 2 * bl && r.len <= pat_len - 2 * bl;
            let d1 = ladder
                .iter()
                .rev()
                .find(|&&r| !rungs[r as usize].long_period && eligible(&rungs[r as usize]));
            match d1 {
                Some(&r) => {
                    pats[pi].seed = Some(Seed::ShortPeriod(r));
                    if !d1_set.contains(&r) {
                        d1_set.push(r);
                    }
                }
                None => {
                    let d2 = ladder.iter().find(|&&r| rungs[r as usize].len >= 2 * bl);
                    match d2 {
                        Some(&r) => {
                            debug_assert!(rungs[r as usize].long_period);
                            pats[pi].seed = Some(Seed::LongPeriod(r));
                            if !d2_set.contains(&r) {
                                d2_set.push(r);
                            }
                        }
                        None if mode == SparseMode::Fast => {
                            return Err(Error::ClassViolation(
                                "pattern ladder has no seed rung".into(),
                            ));
                        }
                        None => {}
                    }
                }
            }
        }

        // tracked rungs: seeds, everything above a pattern's seed, and tops;
        // the reference engine grows matches from level 0, so it tracks all
        let mut needed: Vec<u32> = Vec::new();
        if mode == SparseMode::Reference {
            for r in rungs.iter_mut() {
                r.tracked = true;
            }
        }
        for (pi, ladder) in ladders.iter().enumerate() {
            let Some(Seed::ShortPeriod(seed_rung) | Seed::LongPeriod(seed_rung)) = pats[pi].seed
            else {
                continue;
            };
            let seed_at = ladder.iter().position(|&r| r == seed_rung).unwrap();
            for &r in &ladder[seed_at..] {
                rungs[r as usize].tracked = true;
                if r != seed_rung && !needed.contains(&r) {
                    needed.push(r);
                }
            }
        }

        // process schedules
        let mut p1 = Vec::new();
        for &r in &needed {
            let pred = rungs[r as usize].pred.expect("needed rung has a half");
            if !d1_set.contains(&pred) {
                p1.push(r);
            }
        }

        // chains: suffix-ordered components of the short-period seed set
        let mut chains: Vec<Vec<ChainLink>> = Vec::new();
        {
            let mut remaining: Vec<u32> = d1_set.clone();
            remaining.sort_by_key(|&r| std::cmp::Reverse(rungs[r as usize].len));
            while let Some(head) = remaining.first().copied() {
                let mut chain: Vec<u32> = vec![head];
                remaining.retain(|&r| {
                    if r != head && is_suffix(&rung_bytes[r as usize], &rung_bytes[head as usize])
                    {
                        chain.push(r);
                        false
                    } else {
                        r != head
                    }
                });
                chain.sort_by_key(|&r| std::cmp::Reverse(rungs[r as usize].len));
                chains.push(
                    chain
                        .into_iter()
                        .map(|rung| ChainLink {
                            rung,
                            succs: needed
                                .iter()
                                .copied()
                                .filter(|&s| rungs[s as usize].pred == Some(rung))
                                .collect(),
                            tops: (0..pats.len() as u32)
                                .filter(|&pi| pats[pi as usize].top == rung)
                                .collect(),
                        })
                        .collect(),
                );
            }
        }
        let p2_order: Vec<(u32, u32)> = chains
            .iter()
            .enumerate()
            .flat_map(|(c, links)| (0..links.len()).map(move |l| (c as u32, l as u32)))
            .collect();

        let qext: Vec<u32> = (0..pats.len() as u32)
            .filter(|&pi| rungs[pats[pi as usize].top as usize].long_period)
            .collect();

        // horizons for slot recycling
        for (pi, p) in pats.iter().enumerate() {
            let _ = pi;
            let top = p.top as usize;
            rungs[top].horizon = rungs[top].horizon.max(p.delta + 2 * bl);
        }
        for i in 0..rungs.len() {
            let base = 2 * rungs[i].len + 2 * bl;
            rungs[i].horizon = rungs[i].horizon.max(base);
            if mode == SparseMode::Reference {
                // reference completion reads top-rung members until the
                // whole pattern ends
                rungs[i].horizon = rungs[i].horizon.max(
                    pats.iter()
                        .filter(|p| p.top == i as u32)
                        .map(|p| p.len - rungs[i].len + 2 * bl)
                        .max()
                        .unwrap_or(0),
                );
            }
        }

        // sub-engines (fast mode)
        let (seed_short, seed_long, long_suffixes, long_seed_index) = if mode == SparseMode::Fast {
            let d1_pats: Vec<(u32, Vec<u8>)> = d1_set
                .iter()
                .map(|&r| (r, rung_bytes[r as usize].clone()))
                .collect();
            let seed_short = if d1_pats.is_empty() {
                None
            } else {
                Some(PeriodicPlan::build(
                    &d1_pats,
                    params,
                    block,
                    ReportMode::LongestPow2,
                    retain,
                )?)
            };
            let d2_pats: Vec<(u32, Vec<u8>)> = d2_set
                .iter()
                .map(|&r| (r, rung_bytes[r as usize].clone()))
                .collect();
            let seed_long = if d2_pats.is_empty() {
                None
            } else {
                Some(ShortPlan::build(&d2_pats, params, log_m, 4 * block, retain)?)
            };
            let long_suffixes: Vec<Vec<u32>> = d2_set
                .iter()
                .map(|&r| {
                    d2_set
                        .iter()
                        .copied()
                        .filter(|&s| {
                            s != r
                                && is_suffix(&rung_bytes[s as usize], &rung_bytes[r as usize])
                        })
                        .collect()
                })
                .collect();
            let long_seed_index: HashMap<u32, u32> = d2_set
                .iter()
                .enumerate()
                .map(|(i, &r)| (r, i as u32))
                .collect();
            (seed_short, seed_long, long_suffixes, long_seed_index)
        } else {
            (None, None, Vec::new(), HashMap::new())
        };

        // stem trie + tail colours
        let stems: Vec<Vec<u8>> = patterns
            .iter()
            .map(|(_, p)| p[..p.len() - block].to_vec())
            .collect();
        let colors: Vec<Fingerprint> = pats.iter().map(|p| p.tail_fp).collect();
        let qtrie = CompactQTrie::build(&stems, &colors);
        let mut by_mark = HashMap::new();
        let mut build_collisions = 0;
        for (pi, p) in pats.iter().enumerate() {
            let cid = qtrie.overlay.intern(p.tail_fp).expect("marked");
            if by_mark.insert((qtrie.node(pi), cid), pi as u32).is_some() {
                build_collisions += 1;
            }
        }

        // reference prefix table
        let (level_table, max_level) = if mode == SparseMode::Reference {
            let mut entries: HashMap<(u64, u64), HEntry> = HashMap::new();
            for (i, r) in rungs.iter().enumerate() {
                entries.entry((r.fp.value, r.len)).or_default().rung = Some(i as u32);
            }
            for (pi, (_, p)) in patterns.iter().enumerate() {
                let fp = params.fp_of(p);
                let e = entries.entry((fp.value, fp.len)).or_default();
                // keep the longest pattern per fingerprint (same-length
                // duplicates were removed upstream)
                if e.pattern.is_none() {
                    e.pattern = Some(pi as u32);
                }
            }
            let (tab, dropped) = StaticFpTable::build(entries.into_iter().collect());
            build_collisions += dropped;
            let max_level = rungs
                .iter()
                .map(|r| 63 - r.len.leading_zeros())
                .max()
                .unwrap_or(0);
            (Some(tab), max_level)
        } else {
            (None, 0)
        };

        let per_block = |n: usize| ((n + block - 1) / block).max(1) as u32;
        let p1_steps = per_block(p1.len());
        let p2_steps = per_block(p2_order.len());
        let qext_steps = per_block(qext.len());
        let queue_steps = per_block(
            long_suffixes
                .iter()
                .map(|s| s.len())
                .sum::<usize>()
                .max(1),
        );
        Ok(SparsePlan {
            block,
            mode,
            rungs,
            pats,
            seed_short,
            seed_long,
            long_suffixes,
            long_seed_index,
            p1,
            chains,
            p2_order,
            qext,
            p1_steps,
            p2_steps,
            qext_steps,
            queue_steps,
            qtrie,
            by_mark,
            level_table,
            max_level,
            build_collisions,
            retained: retain.then(|| patterns.iter().map(|(_, p)| p.clone()).collect()),
        })
    }

    pub fn new_state(&self) -> SparseState {
        SparseState {
            progs: vec![[None; PROG_SLOTS]; self.rungs.len()],
            seed_short: self.seed_short.as_ref().map(|p| p.new_state()),
            seed_long: self.seed_long.as_ref().map(|p| p.new_state()),
            suffix_queue: VecDeque::new(),
            p1_rr: RoundRobin::new(self.p1.len()),
            p2_rr: RoundRobin::new(self.p2_order.len()),
            walk: None,
            qext_rr: RoundRobin::new(self.qext.len()),
            pending: vec![None; self.block + 1],
            hits: Vec::new(),
            heaps: (0..=self.max_level as usize + 1)
                .map(|_| BinaryHeap::new())
                .collect(),
            stats: SparseStats::default(),
        }
    }

    pub fn window_need(&self) -> usize {
        4 * self.block + 2
    }

    pub fn arrive(
        &self,
        state: &mut SparseState,
        c: u8,
        buf: &PrefixFpBuffer,
        params: &FpParams,
        hooks: Option<&mut TestHooks>,
        heavy: &mut u32,
    ) -> Vec<Hit> {
        match self.mode {
            SparseMode::Fast => self.arrive_fast(state, c, buf, params, hooks, heavy),
            SparseMode::Reference => self.arrive_reference(state, buf, params, hooks, heavy),
        }
    }

    // ---- fast engine -----------------------------------------------------

    fn arrive_fast(
        &self,
        state: &mut SparseState,
        c: u8,
        buf: &PrefixFpBuffer,
        params: &FpParams,
        mut hooks: Option<&mut TestHooks>,
        heavy: &mut u32,
    ) -> Vec<Hit> {
        let pos = buf.position();
        state.hits.clear();

        // seed the ladder
        if let (Some(plan), Some(st)) = (&self.seed_short, state.seed_short.as_mut()) {
            if let Some(hit) = plan.arrive(st, buf, params, hooks.as_deref_mut(), heavy) {
                let fp = buf.prefix_fp(pos).expect("current prefix");
                self.record(state, hit.id, pos, fp);
            }
        }
        if let (Some(plan), Some(st)) = (&self.seed_long, state.seed_long.as_mut()) {
            plan.arrive(st, c, buf, params, hooks.as_deref_mut(), heavy);
            if let Some(hit) = plan.longest_this_arrival(st) {
                let fp = buf.prefix_fp(pos).expect("current prefix");
                self.record(state, hit.id, pos, fp);
                let si = self.long_seed_index[&hit.id];
                if !self.long_suffixes[si as usize].is_empty() {
                    if state.suffix_queue.len() >= PENDING_QUEUE_CAP {
                        state.suffix_queue.pop_front();
                        state.stats.queue_overflow += 1;
                    }
                    state.suffix_queue.push_back((si, pos, 0));
                }
            }
        }

        // deferred suffix updates
        for _ in 0..self.queue_steps {
            let Some((si, at, idx)) = state.suffix_queue.pop_front() else {
                break;
            };
            *heavy += 1;
            let suffixes = &self.long_suffixes[si as usize];
            let rung = suffixes[idx as usize];
            // a match of the longer rung is a match of its suffix at the
            // same end position; the prefix fingerprint is reconstructable
            // only while `at` is in the buffer window
            if let Ok(fp) = buf.prefix_fp(at) {
                self.record(state, rung, at, fp);
            }
            if (idx as usize) + 1 < suffixes.len() {
                state.suffix_queue.push_front((si, at, idx + 1));
            }
        }

        // process 1: extend a long-period rung out of a sparse predecessor
        for _ in 0..self.p1_steps {
            if let Some(i) = state.p1_rr.tick() {
                let rung = self.p1[i];
                self.extend_sparse(state, rung, pos, buf, params, heavy);
            }
        }

        // process 2: walk the short-period seed chains
        for _ in 0..self.p2_steps {
            if let Some(i) = state.p2_rr.tick() {
                let (chain, link) = self.p2_order[i];
                self.walk_chain_step(state, chain, link, pos, buf, params, heavy);
            }
        }

        // stem extension for patterns topped by a long-period rung
        for _ in 0..self.qext_steps {
            if let Some(i) = state.qext_rr.tick() {
                let pi = self.qext[i];
                let top = self.pats[pi as usize].top;
                for s in 0..PROG_SLOTS {
                    if let Some(prog) = state.progs[top as usize][s] {
                        self.try_stem_extension(state, pi, &prog, pos, buf, params, heavy);
                    }
                }
            }
        }

        // zero-delay reporting: a stem that finished `block` arrivals ago
        // meets its tail window now
        let slot = (pos % (self.block as u64 + 1)) as usize;
        if let Some((due, node, _)) = state.pending[slot] {
            if due == pos {
                state.pending[slot] = None;
                *heavy += 2;
                let tail = buf
                    .substring_fp(pos - self.block as u64 + 1, pos, params)
                    .expect("tail window");
                if let Some(found) = self.qtrie.find(node, tail) {
                    if let Some(cid) = self.qtrie.overlay.intern(tail) {
                        if let Some(&pi) = self.by_mark.get(&(found, cid)) {
                            let p = &self.pats[pi as usize];
                            if pos >= p.len {
                                if let (Some(h), Some(r)) =
                                    (hooks.as_deref_mut(), self.retained.as_ref())
                                {
                                    h.check_window(
                                        pos + 1 - p.len,
                                        pos,
                                        &r[pi as usize],
                                        "sparse match",
                                    );
                                }
                                state.hits.push(Hit {
                                    pos,
                                    id: p.id,
                                    len: p.len as u32,
                                });
                            }
                        }
                    }
                }
            }
        }

        state.hits.clone()
    }

    /// Records a rung match ending at `pos` into the rung's progressions.
    fn record(&self, state: &mut SparseState, rung: u32, pos: u64, prefix_fp: Fingerprint) {
        let r = &self.rungs[rung as usize];
        debug_assert!(r.tracked);
        let slots = &mut state.progs[rung as usize];
        for slot in slots.iter_mut().flatten() {
            if slot.last + slot.period == pos {
                slot.last = pos;
                return;
            }
            if slot.contains(pos) {
                return;
            }
        }
        let fresh = MatchProgression::new(pos, prefix_fp, r.period_fp, r.period);
        let mut occupied = 0;
        for slot in slots.iter_mut() {
            match slot {
                None => {
                    *slot = Some(fresh);
                    return;
                }
                Some(old) if old.last + r.horizon < pos => {
                    *slot = Some(fresh);
                    return;
                }
                _ => occupied += 1,
            }
        }
        state.stats.max_progressions_per_rung =
            state.stats.max_progressions_per_rung.max(occupied + 1);
        let idx = (0..PROG_SLOTS)
            .min_by_key(|&i| slots[i].map(|p| p.last).unwrap_or(0))
            .unwrap();
        slots[idx] = Some(fresh);
        state.stats.evicted_progressions += 1;
    }

    /// Process 1 step: predecessor has a long period, so its progression
    /// holds at most a couple of candidates in the window; one fingerprint
    /// comparison decides each.
    fn extend_sparse(
        &self,
        state: &mut SparseState,
        rung: u32,
        pos: u64,
        buf: &PrefixFpBuffer,
        params: &FpParams,
        heavy: &mut u32,
    ) {
        let r = &self.rungs[rung as usize];
        let pred = r.pred.expect("scheduled rung has a predecessor");
        let half = r.len / 2;
        let bl = self.block as u64;
        if pos <= half {
            return;
        }
        // a new match ends in [pos-block, pos], so the predecessor match
        // ends in [pos-half-block, pos-half]
        let hi = pos - half;
        let lo = hi.saturating_sub(bl);
        for s in 0..PROG_SLOTS {
            let Some(prog) = state.progs[pred as usize][s] else {
                continue;
            };
            if hi < prog.first {
                continue;
            }
            let mut q = prog
                .last
                .min(hi - (hi - prog.first) % prog.period.max(1));
            if !prog.contains(q) {
                continue;
            }
            while q >= lo {
                let e = q + half;
                if e <= pos && e + bl >= pos {
                    *heavy += 1;
                    state.stats.extension_verifies += 1;
                    if let Ok(whole) = buf.prefix_fp(e) {
                        let want =
                            params.concat(prog.prefix_fp_at(q, params), r.second_half_fp);
                        if whole == want {
                            self.record(state, rung, e, whole);
                        }
                    }
                }
                if q < prog.first + prog.period {
                    break;
                }
                q -= prog.period;
            }
        }
    }

    /// Process 2 step: one chain link per arrival. The working progression
    /// is inherited from longer links (their matches are matches of every
    /// suffix link at the same end positions) and reloaded when it no longer
    /// reaches the link's window.
    fn walk_chain_step(
        &self,
        state: &mut SparseState,
        chain: u32,
        link_idx: u32,
        pos: u64,
        buf: &PrefixFpBuffer,
        params: &FpParams,
        heavy: &mut u32,
    ) {
        let link = &self.chains[chain as usize][link_idx as usize];
        let m = &self.rungs[link.rung as usize];
        let bl = self.block as u64;
        // window of predecessor (= this link's rung) matches relevant now
        let lo = pos.saturating_sub(m.len + bl);
        let hi = pos.saturating_sub(m.len).max(lo);

        let inherited = match (link_idx, state.walk.take()) {
            (0, _) => None,
            (_, Some((c, w))) if c == chain => Some(w),
            _ => None,
        };
        let use_inherited =
            inherited.is_some_and(|w| w.members_in(lo.saturating_sub(1), hi) > 0);
        let working = if use_inherited {
            inherited
        } else {
            // reload from this link's own slots: prefer one reaching the window
            let slots = &state.progs[link.rung as usize];
            slots
                .iter()
                .flatten()
                .find(|p| p.members_in(lo.saturating_sub(1), hi) > 0)
                .or_else(|| slots.iter().flatten().max_by_key(|p| p.last))
                .copied()
        };
        let Some(w) = working else {
            return;
        };
        state.walk = Some((chain, w));

        for &succ in &link.succs {
            self.extend_from_chain(
                state,
                &w,
                succ,
                self.rungs[succ as usize].chain_r,
                m.len,
                self.rungs[succ as usize].second_half_fp,
                pos,
                buf,
                params,
                heavy,
                ChainTarget::Rung,
            );
        }
        for &pi in &link.tops {
            let p = &self.pats[pi as usize];
            self.extend_from_chain(
                state,
                &w,
                pi,
                p.chain_r,
                p.delta,
                p.ext_fp,
                pos,
                buf,
                params,
                heavy,
                ChainTarget::Stem,
            );
        }
    }

    /// Extends members of a short-period progression by `gap` characters.
    /// The candidate members are those whose same-chain successor count
    /// within the gap equals the string-determined `chain_r`; each surviving
    /// candidate costs one fingerprint comparison.
    #[allow(clippy::too_many_arguments)]
    fn extend_from_chain(
        &self,
        state: &mut SparseState,
        w: &MatchProgression,
        target: u32,
        chain_r: u64,
        gap: u64,
        ext_fp: Fingerprint,
        pos: u64,
        buf: &PrefixFpBuffer,
        params: &FpParams,
        heavy: &mut u32,
        kind: ChainTarget,
    ) {
        let bl = self.block as u64;
        // resulting end e = q + gap must lie in (pos - block, pos]
        let e_lo = pos.saturating_sub(bl) + 1;
        let mut candidates: [u64; 4] = [0; 4];
        let mut n = 0;
        // boundary solution: exactly chain_r members follow q before the chain ends
        if w.count() > chain_r {
            let q = w.last - chain_r * w.period;
            if q + gap >= e_lo && q + gap <= pos {
                candidates[n] = q;
                n += 1;
            }
        }
        // interior solutions exist only when the chain keeps running through
        // the whole gap
        if gap / w.period.max(1) == chain_r && w.period > 0 {
            let mut q = pos - gap - (pos - gap).saturating_sub(w.first) % w.period;
            let mut guard = 0;
            while q + gap >= e_lo && guard < 4 {
                if w.contains(q) && q + gap <= w.last && n < candidates.len() {
                    let dup = candidates[..n].contains(&q);
                    if !dup {
                        candidates[n] = q;
                        n += 1;
                    }
                }
                if q < w.period {
                    break;
                }
                q -= w.period;
                guard += 1;
            }
        }
        for &q in &candidates[..n] {
            if !w.contains(q) || w.members_in(q, q + gap) != chain_r {
                continue;
            }
            let e = q + gap;
            *heavy += 1;
            state.stats.extension_verifies += 1;
            let Ok(whole) = buf.prefix_fp(e) else {
                continue;
            };
            let want = params.concat(w.prefix_fp_at(q, params), ext_fp);
            if whole != want {
                continue;
            }
            match kind {
                ChainTarget::Rung => self.record(state, target, e, whole),
                ChainTarget::Stem => self.note_stem_match(state, target, e),
            }
        }
    }

    /// Stem extension for long-period-topped patterns: the top progression
    /// is sparse, so the window holds at most a couple of candidates.
    fn try_stem_extension(
        &self,
        state: &mut SparseState,
        pi: u32,
        prog: &MatchProgression,
        pos: u64,
        buf: &PrefixFpBuffer,
        params: &FpParams,
        heavy: &mut u32,
    ) {
        let p = &self.pats[pi as usize];
        let bl = self.block as u64;
        let e_lo = pos.saturating_sub(bl) + 1;
        if pos < p.delta {
            return;
        }
        let mut q = pos - p.delta;
        if q < prog.first {
            return;
        }
        q -= (q - prog.first) % prog.period;
        let mut guard = 0;
        while q + p.delta >= e_lo && guard < 3 {
            if prog.contains(q)
                && prog.members_in(q, q + p.delta) == p.chain_r
                && q + p.delta <= pos
            {
                let e = q + p.delta;
                *heavy += 1;
                state.stats.extension_verifies += 1;
                if let Ok(whole) = buf.prefix_fp(e) {
                    let want = params.concat(prog.prefix_fp_at(q, params), p.ext_fp);
                    if whole == want {
                        self.note_stem_match(state, pi, e);
                    }
                }
            }
            if q < prog.period + prog.first {
                break;
            }
            q -= prog.period;
            guard += 1;
        }
    }

    /// Remembers a stem match ending at `e`; the report is due when the tail
    /// window completes, `block` arrivals later. Only the longest stem per
    /// due position is kept.
    fn note_stem_match(&self, state: &mut SparseState, pi: u32, e: u64) {
        let p = &self.pats[pi as usize];
        let due = e + self.block as u64;
        let slot = (due % (self.block as u64 + 1)) as usize;
        match state.pending[slot] {
            Some((d, _, stem_len)) if d == due && stem_len >= p.stem_len => {}
            _ => {
                state.pending[slot] = Some((due, self.qtrie.node(pi as usize), p.stem_len));
            }
        }
    }

    // ---- reference engine -------------------------------------------------

    fn arrive_reference(
        &self,
        state: &mut SparseState,
        buf: &PrefixFpBuffer,
        params: &FpParams,
        mut hooks: Option<&mut TestHooks>,
        heavy: &mut u32,
    ) -> Vec<Hit> {
        let pos = buf.position();
        let table = self.level_table.as_ref().expect("reference mode");
        state.hits.clear();

        // seed level 0 with single-character rung matches
        let seed_fp = buf.substring_fp(pos, pos, params).expect("current char");
        *heavy += 1;
        if let Some(e) = table.get(seed_fp.value, 1) {
            if let Some(rung) = e.rung {
                let fp = buf.prefix_fp(pos).unwrap();
                self.record(state, rung, pos, fp);
                state.heaps[0].push(std::cmp::Reverse((pos, rung)));
            }
        }

        // per level, grow every member whose doubling is due this arrival
        for level in 0..state.heaps.len() {
            let span = 1u64 << level;
            loop {
                let Some(&std::cmp::Reverse((member, rung))) = state.heaps[level].peek() else {
                    break;
                };
                if member + span > pos {
                    break;
                }
                state.heaps[level].pop();
                if member + span < pos {
                    continue; // stale entry
                }
                let Some(slot) = state.progs[rung as usize]
                    .iter_mut()
                    .flatten()
                    .find(|p| p.contains(member) && p.probed_through < member)
                else {
                    continue;
                };
                slot.probed_through = member;
                let after = slot.rth_last(1).filter(|&l| l > member).map(|_| {
                    // next member of this progression becomes the new front
                    member + slot.period
                });
                let prefix_at = slot.prefix_fp_at(member, params);
                if let Some(next) = after {
                    if slot.contains(next) {
                        state.heaps[level].push(std::cmp::Reverse((next, rung)));
                    }
                }
                // fingerprint of the doubled span t_{member-span+1-span'}..
                let start_prefix = params
                    .strip_suffix(prefix_at, self.rungs[rung as usize].fp)
                    .expect("member has the rung behind it");
                let whole = buf.prefix_fp(pos).unwrap();
                let grown = params.strip_prefix(whole, start_prefix).expect("prefix");
                *heavy += 1;
                if let Some(entry) = table.get(grown.value, grown.len) {
                    if let Some(pat) = entry.pattern {
                        let p = &self.pats[pat as usize];
                        if grown.len == p.len {
                            if let (Some(h), Some(r)) =
                                (hooks.as_deref_mut(), self.retained.as_ref())
                            {
                                h.check_window(
                                    pos + 1 - p.len,
                                    pos,
                                    &r[pat as usize],
                                    "reference pattern",
                                );
                            }
                            state.hits.push(Hit {
                                pos,
                                id: p.id,
                                len: p.len as u32,
                            });
                        }
                    }
                    if let Some(next_rung) = entry.rung {
                        if self.rungs[next_rung as usize].len == grown.len {
                            self.record(state, next_rung, pos, whole);
                            let lvl = (63 - grown.len.leading_zeros()) as usize;
                            if lvl < state.heaps.len() {
                                state.heaps[lvl].push(std::cmp::Reverse((pos, next_rung)));
                            }
                        }
                    }
                }
            }
        }

        // whole-pattern completion off the top rung
        for (pi, p) in self.pats.iter().enumerate() {
            let gap = p.len - self.rungs[p.top as usize].len;
            if pos <= gap {
                continue;
            }
            let q = pos - gap;
            for slot in state.progs[p.top as usize].iter().flatten() {
                if !slot.contains(q) {
                    continue;
                }
                *heavy += 1;
                let whole = buf.prefix_fp(pos).unwrap();
                let want = params.concat(slot.prefix_fp_at(q, params), p.whole_ext_fp);
                if whole == want {
                    if let (Some(h), Some(r)) = (hooks.as_deref_mut(), self.retained.as_ref()) {
                        h.check_window(pos + 1 - p.len, pos, &r[pi], "reference completion");
                    }
                    state.hits.push(Hit {
                        pos,
                        id: p.id,
                        len: p.len as u32,
                    });
                }
                break;
            }
        }

        state.hits.sort_unstable_by_key(|h| (h.pos, h.id));
        state.hits.dedup();
        state.hits.clone()
    }

    pub fn accounted_words(&self) -> usize {
        let mut words = self.rungs.len() * 12 + self.pats.len() * 12;
        words += self.qtrie.accounted_words() + self.by_mark.len() * 3;
        words += self.p1.len() + self.p2_order.len() * 2 + self.qext.len();
        words += self
            .chains
            .iter()
            .flatten()
            .map(|l| 1 + l.succs.len() + l.tops.len())
            .sum::<usize>();
        if let Some(p) = &self.seed_short {
            words += p.accounted_words();
        }
        if let Some(p) = &self.seed_long {
            words += p.accounted_words();
        }
        if let Some(t) = &self.level_table {
            words += t.accounted_words();
        }
        words
    }

    pub fn state_words(&self, state: &SparseState) -> usize {
        state.progs.len() * PROG_SLOTS * 7 + state.pending.len() * 3
    }
}

#[derive(Clone, Copy)]
enum ChainTarget {
    Rung,
    Stem,
}

/// Number of consecutive same-chain occurrences of `part` inside `whole`
/// ending strictly past `part`'s own end: occurrences at end offsets
/// `|part| + t*period(part)` for t = 1, 2, ... until the first miss.
fn chain_occurrences(whole: &[u8], part: &[u8]) -> u64 {
    let period = period_of(part).map(|p| p.period).unwrap_or(1);
    let mut t = 0u64;
    loop {
        let end = part.len() + (t as usize + 1) * period;
        if end > whole.len() || whole[end - part.len()..end] != *part {
            return t;
        }
        t += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ac::AcAutomaton;
    use crate::krhash::MERSENNE61;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> FpParams {
        FpParams::new(MERSENNE61, 77, 8192).unwrap()
    }

    fn run(plan: &SparsePlan, text: &[u8], params: &FpParams) -> Vec<(u64, u32)> {
        let mut st = plan.new_state();
        let mut buf = PrefixFpBuffer::new(plan.window_need().max(64));
        let mut hooks = TestHooks::default();
        let mut out = Vec::new();
        let mut heavy = 0;
        for (i, &c) in text.iter().enumerate() {
            buf.push(c, params);
            hooks.text.push(c);
            for h in plan.arrive(&mut st, c, &buf, params, Some(&mut hooks), &mut heavy) {
                assert_eq!(h.pos, i as u64 + 1, "online contract");
                out.push((h.pos, h.id));
            }
        }
        assert_eq!(hooks.log.count(), 0, "collision log must stay empty");
        out.sort_unstable();
        out.dedup();
        out
    }

    fn oracle(patterns: &[(u32, Vec<u8>)], text: &[u8]) -> Vec<(u64, u32)> {
        let refs: Vec<&[u8]> = patterns.iter().map(|(_, p)| p.as_slice()).collect();
        let mut out: Vec<(u64, u32)> = AcAutomaton::offline_match(&refs, text)
            .into_iter()
            .map(|(pos, i)| (pos, patterns[i as usize].0))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Long aperiodic pattern, block=4: every rung from length 8 up has a
    /// long period.
    fn aperiodic_pattern(len: usize, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let p: Vec<u8> = (0..len).map(|_| rng.gen_range(b'a'..=b'c')).collect();
            let stem = &p[..len - 4];
            if period_of(stem).unwrap().period >= 4 {
                return p;
            }
        }
    }

    #[test]
    fn round_robin_cycles() {
        let mut rr = RoundRobin::new(3);
        let seq: Vec<_> = (0..7).map(|_| rr.tick().unwrap()).collect();
        assert_eq!(seq, vec![0, 1, 2, 0, 1, 2, 0]);
        assert_eq!(RoundRobin::new(0).tick(), None);
    }

    #[test]
    fn rth_last_examples() {
        let p = MatchProgression {
            first: 10,
            first_prefix_fp: Fingerprint::empty(),
            period_fp: Fingerprint::empty(),
            period: 2,
            last: 16,
            probed_through: 0,
        };
        assert_eq!(p.rth_last(2), Some(14));
        assert_eq!(p.rth_last(1), Some(16));
        assert_eq!(p.rth_last(4), Some(10));
        assert_eq!(p.rth_last(5), None);
        let single = MatchProgression {
            first: 7,
            last: 7,
            ..p
        };
        assert_eq!(single.rth_last(3), None);
    }

    #[test]
    fn chain_occurrence_counts() {
        // whole starts with U^3, part = U^2 where U = "ab"
        assert_eq!(chain_occurrences(b"abababab", b"abab"), 2);
        assert_eq!(chain_occurrences(b"ababx", b"ab"), 1);
        assert_eq!(chain_occurrences(b"abxy", b"ab"), 0);
    }

    #[test]
    fn reference_single_pow2_pattern() {
        let p = params();
        let pat = aperiodic_pattern(16, 5); // block 2 below: 16 > 2*2
        let plan = SparsePlan::build(
            &[(0, pat.clone())],
            &p,
            2,
            1,
            SparseMode::Reference,
            true,
        )
        .unwrap();
        let mut text = b"z".to_vec();
        text.extend_from_slice(&pat);
        let got = run(&plan, &text, &p);
        assert_eq!(got, vec![(17, 0)]);
    }

    #[test]
    fn reference_periodic_progressions_stay_small() {
        let p = params();
        let pat = vec![b'a'; 8];
        let plan =
            SparsePlan::build(&[(0, pat.clone())], &p, 2, 1, SparseMode::Reference, true);
        // stem "aaaaaa" has period 1 < block: rejected from this strategy
        assert!(plan.is_err());
    }

    #[test]
    fn fast_single_long_pattern() {
        let p = params();
        let pat = aperiodic_pattern(64, 42);
        let plan =
            SparsePlan::build(&[(0, pat.clone())], &p, 4, 2, SparseMode::Fast, true).unwrap();
        let mut text: Vec<u8> = b"zzzzzzzz".to_vec();
        text.extend_from_slice(&pat);
        text.extend_from_slice(b"yyyyyyyy");
        let got = run(&plan, &text, &p);
        assert_eq!(got, vec![(8 + 64, 0)]);
    }

    #[test]
    fn fast_short_stream_no_events() {
        let p = params();
        let pat = aperiodic_pattern(64, 43);
        let plan = SparsePlan::build(&[(0, pat)], &p, 4, 2, SparseMode::Fast, true).unwrap();
        assert!(run(&plan, b"abcab", &p).is_empty());
    }

    #[test]
    fn fast_suffix_stems_report_shorter() {
        // stem of pattern 0 is a suffix of stem of pattern 1; only pattern 0
        // occurs, discovered through the longer stem's pending entry
        let p = params();
        let block = 4usize;
        let q1 = aperiodic_pattern(16, 9)[..12].to_vec();
        let mut q2 = b"ba".to_vec();
        q2.extend_from_slice(&q1);
        let mut p1 = q1.clone();
        p1.extend_from_slice(b"zzzz");
        let mut p2 = q2.clone();
        p2.extend_from_slice(b"wwww");
        let pats = vec![(0u32, p1.clone()), (1u32, p2.clone())];
        let plan = SparsePlan::build(&pats, &p, block, 2, SparseMode::Fast, true).unwrap();
        let mut text = b"cc".to_vec();
        text.extend_from_slice(&q2);
        text.extend_from_slice(b"zzzz"); // completes p1 (via q1), not p2
        let got = run(&plan, &text, &p);
        let want = oracle(&pats, &text);
        assert_eq!(got, want);
        assert!(want.iter().any(|&(_, id)| id == 0));
    }

    #[test]
    fn fast_matches_reference_randomised() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for trial in 0..25 {
            let block = 4usize;
            let k = rng.gen_range(1..=3);
            let mut pats = Vec::new();
            for id in 0..k {
                let len = rng.gen_range(17..=80);
                pats.push((id as u32, aperiodic_pattern(len, 1000 + trial * 10 + id as u64)));
            }
            // drop suffix-contained patterns
            let all = pats.clone();
            pats.retain(|(_, p0)| !all.iter().any(|(_, q)| q != p0 && is_suffix(q, p0)));

            let fast =
                SparsePlan::build(&pats, &p, block, 2, SparseMode::Fast, true).unwrap();
            let reference =
                SparsePlan::build(&pats, &p, block, 2, SparseMode::Reference, true).unwrap();
            let n = 4000;
            let mut text: Vec<u8> = (0..n).map(|_| rng.gen_range(b'a'..=b'c')).collect();
            for _ in 0..30 {
                let (_, pat) = &pats[rng.gen_range(0..pats.len())];
                let at = rng.gen_range(0..n - pat.len());
                text[at..at + pat.len()].copy_from_slice(pat);
            }
            let got_fast = run(&fast, &text, &p);
            let got_ref = run(&reference, &text, &p);
            let want = oracle(&pats, &text);
            assert_eq!(got_ref, want, "reference vs oracle, trial {trial}");
            assert_eq!(got_fast, want, "fast vs oracle, trial {trial}");
        }
    }
}
