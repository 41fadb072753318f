//! Dictionary preprocessing, pattern classification, per-arrival
//! orchestration of the three matching strategies, and the public streaming
//! interface.
//!
//! Classification, for block `= k * L` with `L` the rounded base-2 log of
//! the longest pattern: length at most `2*block` goes to the short strategy;
//! longer patterns go to the periodic strategy when the period of their stem
//! (pattern minus its last `block` characters) is below the block, and to
//! the sparse strategy otherwise. Sparse-class patterns whose doubling
//! ladder lacks a seed rung (no power of two in `[2*block, len-2*block]`,
//! possible only below `6*block`) are folded back into the short strategy
//! with a widened cap.

use crate::ac::{self, AcAutomaton};
use crate::diag::{OpCounter, TestHooks};
use crate::error::Error;
use crate::krhash::{is_prime_u64, FpParams, PrefixFpBuffer, MERSENNE61};
use crate::periodic::{PeriodicPlan, PeriodicState, ReportMode};
use crate::short::{ShortPlan, ShortState};
use crate::sparse::{SparseMode, SparsePlan, SparseState};
use crate::stringology::{is_suffix, period_of, rounded_log2};
use std::sync::Arc;

/// A reported match: some pattern ends at `pos` (1-based); `pattern` is one
/// witness (the longest matching pattern still in the deduplicated
/// dictionary).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MatchEvent {
    pub pos: u64,
    pub pattern: u32,
}

/// A strategy-level hit carrying the witness length, merged by the engine
/// into per-position longest-witness events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hit {
    pub pos: u64,
    pub id: u32,
    pub len: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimeChoice {
    /// 2^61 - 1.
    Mersenne61,
    Custom(u64),
}

/// Which strategies run. `Auto` classifies and runs all three; the forced
/// modes require every pattern to satisfy that strategy's preconditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineMode {
    Auto,
    /// Short strategy only.
    Short,
    /// Periodic strategy only.
    Periodic,
    /// Sparse strategy only (fast engine).
    Sparse,
    /// Sparse strategy only, level-walking reference engine.
    Levels,
    /// Offline-automaton streaming (ground truth; not space-bounded).
    Oracle,
}

/// Test-only replacements for the derived thresholds.
#[derive(Debug, Clone, Copy, Default)]
pub struct ThresholdOverride {
    pub log_m: Option<usize>,
    pub block: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub seed: u64,
    pub prime: PrimeChoice,
    /// Maximum stream length `N`; the modulus must exceed `N^3`.
    pub max_stream_len: u64,
    pub mode: EngineMode,
    /// Retain strings and the stream for collision verification.
    pub test_mode: bool,
    pub overrides: ThresholdOverride,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            seed: 0,
            prime: PrimeChoice::Mersenne61,
            max_stream_len: 1 << 20,
            mode: EngineMode::Auto,
            test_mode: false,
            overrides: ThresholdOverride::default(),
        }
    }
}

/// Session counters.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stats {
    pub arrivals: u64,
    pub events: u64,
    /// Words of retained storage: preprocessing tables plus stream state
    /// (test-mode retention excluded).
    pub accounted_words: u64,
    pub max_heavy_ops_per_arrival: u32,
    pub collision_count: u64,
    /// Short-strategy searches that missed their de-amortisation deadline.
    pub session_overruns: u64,
    pub evicted_progressions: u64,
    pub evicted_runs: u64,
    pub max_periodic_probes: u32,
}

#[derive(Debug)]
struct EnginePlan {
    params: FpParams,
    config: EngineConfig,
    pub k: usize,
    pub m: usize,
    pub log_m: usize,
    pub block: usize,
    short: Option<ShortPlan>,
    periodic: Option<PeriodicPlan>,
    sparse: Option<SparsePlan>,
    oracle: Option<(AcAutomaton, Vec<u32>, Vec<u32>)>,
    window: usize,
    plan_words: u64,
}

/// An immutable dictionary plan. Build once, then open any number of
/// concurrent [`Matcher`] sessions.
#[derive(Debug, Clone)]
pub struct Engine {
    plan: Arc<EnginePlan>,
}

impl Engine {
    pub fn build(patterns: &[Vec<u8>], config: EngineConfig) -> Result<Engine, Error> {
        if patterns.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        let n = config.max_stream_len;
        let p = match config.prime {
            PrimeChoice::Mersenne61 => MERSENNE61,
            PrimeChoice::Custom(p) => {
                if !is_prime_u64(p) {
                    return Err(Error::InvalidConfig(format!("{p} is not prime")));
                }
                p
            }
        };
        if (p as u128) <= (n as u128).pow(3) {
            return Err(Error::InvalidConfig(format!(
                "modulus {p} does not exceed the cube of the stream bound {n}"
            )));
        }
        for pat in patterns {
            if pat.is_empty() {
                return Err(Error::EmptyPattern);
            }
            if pat.len() as u64 > n {
                return Err(Error::PatternTooLong {
                    len: pat.len(),
                    max: n as usize,
                });
            }
        }

        // duplicates, then patterns containing another pattern as a suffix:
        // their end positions coincide with the survivor's, so the reported
        // position set is unchanged
        let mut kept: Vec<(u32, Vec<u8>)> = Vec::new();
        for (id, pat) in patterns.iter().enumerate() {
            if !kept.iter().any(|(_, q)| q == pat) {
                kept.push((id as u32, pat.clone()));
            }
        }
        let snapshot: Vec<Vec<u8>> = kept.iter().map(|(_, p)| p.clone()).collect();
        kept.retain(|(_, p)| !snapshot.iter().any(|q| q != p && is_suffix(q, p)));

        let k = kept.len();
        let m = kept.iter().map(|(_, p)| p.len()).max().unwrap();
        let log_m = config.overrides.log_m.unwrap_or_else(|| rounded_log2(m));
        let block = config.overrides.block.unwrap_or(k * log_m);
        if log_m == 0 || block == 0 {
            return Err(Error::InvalidConfig("thresholds must be positive".into()));
        }

        let table_exp = 4 * block + m + 64;
        let params = FpParams::new(p, config.seed, table_exp)?;
        let retain = config.test_mode;

        let mut short_bucket: Vec<(u32, Vec<u8>)> = Vec::new();
        let mut periodic_bucket: Vec<(u32, Vec<u8>)> = Vec::new();
        let mut sparse_bucket: Vec<(u32, Vec<u8>)> = Vec::new();
        match config.mode {
            EngineMode::Auto => {
                for (id, pat) in &kept {
                    if pat.len() <= 2 * block {
                        short_bucket.push((*id, pat.clone()));
                        continue;
                    }
                    let stem = &pat[..pat.len() - block];
                    if period_of(stem)?.period < block {
                        periodic_bucket.push((*id, pat.clone()));
                    } else if SparsePlan::has_seed_rung(pat.len(), block) {
                        sparse_bucket.push((*id, pat.clone()));
                    } else {
                        // no seed rung exists, which bounds the length below
                        // 6*block; the short strategy absorbs it
                        short_bucket.push((*id, pat.clone()));
                    }
                }
            }
            EngineMode::Short => short_bucket = kept.clone(),
            EngineMode::Periodic => periodic_bucket = kept.clone(),
            EngineMode::Sparse | EngineMode::Levels => sparse_bucket = kept.clone(),
            EngineMode::Oracle => {}
        }

        let short = if short_bucket.is_empty() {
            None
        } else {
            let max_len = short_bucket.iter().map(|(_, p)| p.len()).max().unwrap();
            let cap = match config.mode {
                EngineMode::Auto => (2 * block).max(max_len),
                _ => (4 * block).max(2 * log_m),
            };
            Some(ShortPlan::build(&short_bucket, &params, log_m, cap, retain)?)
        };
        let periodic = if periodic_bucket.is_empty() {
            None
        } else {
            Some(PeriodicPlan::build(
                &periodic_bucket,
                &params,
                block,
                ReportMode::Standard,
                retain,
            )?)
        };
        let sparse = if sparse_bucket.is_empty() {
            None
        } else {
            let mode = if config.mode == EngineMode::Levels {
                SparseMode::Reference
            } else {
                SparseMode::Fast
            };
            Some(SparsePlan::build(
                &sparse_bucket,
                &params,
                block,
                log_m,
                mode,
                retain,
            )?)
        };
        let oracle = if config.mode == EngineMode::Oracle {
            let refs: Vec<&[u8]> = kept.iter().map(|(_, p)| p.as_slice()).collect();
            let ids = kept.iter().map(|(id, _)| *id).collect();
            let lens = kept.iter().map(|(_, p)| p.len() as u32).collect();
            Some((AcAutomaton::build(&refs)?, ids, lens))
        } else {
            None
        };

        let window = [
            short.as_ref().map(|s| s.window_need()).unwrap_or(0),
            periodic.as_ref().map(|s| s.window_need()).unwrap_or(0),
            sparse.as_ref().map(|s| s.window_need()).unwrap_or(0),
            2 * log_m + 2,
        ]
        .into_iter()
        .max()
        .unwrap()
        .max(8);

        let plan_words = params.accounted_words() as u64
            + short.as_ref().map(|s| s.accounted_words()).unwrap_or(0) as u64
            + periodic.as_ref().map(|s| s.accounted_words()).unwrap_or(0) as u64
            + sparse.as_ref().map(|s| s.accounted_words()).unwrap_or(0) as u64;

        Ok(Engine {
            plan: Arc::new(EnginePlan {
                params,
                config,
                k,
                m,
                log_m,
                block,
                short,
                periodic,
                sparse,
                oracle,
                window,
                plan_words,
            }),
        })
    }

    /// Opens a stream session. Sessions are independent and single-threaded;
    /// the plan is shared read-only.
    pub fn matcher(&self) -> Matcher {
        let plan = self.plan.clone();
        Matcher {
            buf: PrefixFpBuffer::new(plan.window),
            short: plan.short.as_ref().map(|s| s.new_state()),
            periodic: plan.periodic.as_ref().map(|s| s.new_state()),
            sparse: plan.sparse.as_ref().map(|s| s.new_state()),
            ac_state: ac::ROOT,
            hooks: plan.config.test_mode.then(TestHooks::default),
            heavy: OpCounter::default(),
            events: 0,
            max_periodic_probes: 0,
            plan,
        }
    }

    pub fn pattern_count(&self) -> usize {
        self.plan.k
    }

    pub fn block(&self) -> usize {
        self.plan.block
    }

    pub fn log_m(&self) -> usize {
        self.plan.log_m
    }

    pub fn max_pattern_len(&self) -> usize {
        self.plan.m
    }
}

/// One stream session: feed characters, collect match events.
#[derive(Debug)]
pub struct Matcher {
    plan: Arc<EnginePlan>,
    buf: PrefixFpBuffer,
    short: Option<ShortState>,
    periodic: Option<PeriodicState>,
    sparse: Option<SparseState>,
    ac_state: u32,
    hooks: Option<TestHooks>,
    heavy: OpCounter,
    events: u64,
    max_periodic_probes: u32,
}

impl Matcher {
    /// Consumes one character and returns the events ending exactly at this
    /// position: at most one, carrying the longest witness.
    pub fn push(&mut self, c: u8) -> Result<Vec<MatchEvent>, Error> {
        let plan = self.plan.clone();
        if self.buf.position() >= plan.config.max_stream_len {
            return Err(Error::StreamOverflow {
                max: plan.config.max_stream_len,
            });
        }
        self.buf.push(c, &plan.params);
        if let Some(h) = self.hooks.as_mut() {
            h.text.push(c);
        }
        let pos = self.buf.position();
        let mut heavy = 0u32;
        let mut best: Option<Hit> = None;
        let mut take = |hit: Hit| {
            debug_assert_eq!(hit.pos, pos);
            if best.map_or(true, |b| hit.len > b.len) {
                best = Some(hit);
            }
        };

        if let (Some(p), Some(st)) = (&plan.short, self.short.as_mut()) {
            for h in p.arrive(st, c, &self.buf, &plan.params, self.hooks.as_mut(), &mut heavy) {
                take(h);
            }
        }
        if let (Some(p), Some(st)) = (&plan.periodic, self.periodic.as_mut()) {
            if let Some(h) = p.arrive(st, &self.buf, &plan.params, self.hooks.as_mut(), &mut heavy)
            {
                take(h);
            }
            self.max_periodic_probes = self.max_periodic_probes.max(st.probes_last_arrival);
        }
        if let (Some(p), Some(st)) = (&plan.sparse, self.sparse.as_mut()) {
            for h in p.arrive(st, c, &self.buf, &plan.params, self.hooks.as_mut(), &mut heavy) {
                take(h);
            }
        }
        if let Some((auto, ids, lens)) = &plan.oracle {
            let (next, hops) = auto.step_counting(self.ac_state, c);
            self.ac_state = next;
            heavy += 1 + hops;
            for &pid in auto.outputs(next) {
                take(Hit {
                    pos,
                    id: ids[pid as usize],
                    len: lens[pid as usize],
                });
            }
        }

        self.heavy.bump(heavy);
        self.heavy.end_arrival();
        Ok(match best {
            Some(h) => {
                self.events += 1;
                vec![MatchEvent {
                    pos: h.pos,
                    pattern: h.id,
                }]
            }
            None => Vec::new(),
        })
    }

    pub fn position(&self) -> u64 {
        self.buf.position()
    }

    /// False-equal fingerprint comparisons observed so far (test mode).
    pub fn collision_count(&self) -> u64 {
        self.hooks.as_ref().map(|h| h.log.count()).unwrap_or(0)
    }

    pub fn stats(&self) -> Stats {
        let plan = &self.plan;
        let state_words = self.buf.accounted_words() as u64
            + self
                .sparse
                .as_ref()
                .zip(plan.sparse.as_ref())
                .map(|(st, p)| p.state_words(st) as u64)
                .unwrap_or(0);
        Stats {
            arrivals: self.buf.position(),
            events: self.events,
            accounted_words: plan.plan_words + state_words,
            max_heavy_ops_per_arrival: self.heavy.max_per_arrival,
            collision_count: self.collision_count(),
            session_overruns: self.short.as_ref().map(|s| s.overruns).unwrap_or(0),
            evicted_progressions: self
                .sparse
                .as_ref()
                .map(|s| s.stats.evicted_progressions)
                .unwrap_or(0),
            evicted_runs: self.periodic.as_ref().map(|s| s.evicted_runs).unwrap_or(0),
            max_periodic_probes: self.max_periodic_probes,
        }
    }

    /// Closes the session and returns its counters.
    pub fn finish(self) -> Stats {
        self.stats()
    }
}
