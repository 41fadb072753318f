//! Online dictionary matching over a byte stream.
//!
//! Given a set of patterns and a stream of bytes arriving one at a time, the
//! engine reports, before the next byte is consumed, every stream position at
//! which some pattern ends. Working state is kept small: the stream itself is
//! never stored, only a window of prefix fingerprints plus per-pattern
//! bookkeeping of O(k log m) words, for k patterns of length at most m.
//!
//! Three cooperating strategies cover the dictionary:
//! - short patterns: an Aho-Corasick automaton for the very short ones and a
//!   head/tail split over a reversed-head trie for the rest ([`short`]);
//! - long patterns with a highly periodic body: runs of a fixed anchor block
//!   compressed into arithmetic progressions ([`periodic`]);
//! - long patterns with a long-period body: doubling prefix ladders whose
//!   sparse matches are extended a level at a time ([`sparse`]).
//!
//! [`Engine`] classifies the dictionary, runs the strategies in lockstep,
//! and merges their reports.

pub mod ac;
pub mod diag;
pub mod engine;
pub mod error;
mod fptab;
pub mod krhash;
pub mod periodic;
pub mod short;
pub mod sparse;
pub mod stringology;
pub mod tries;

pub use engine::{
    Engine, EngineConfig, EngineMode, MatchEvent, Matcher, PrimeChoice, Stats, ThresholdOverride,
};
pub use error::Error;
pub use krhash::{Fingerprint, FpParams, PrefixFpBuffer, MERSENNE61};
pub use stringology::PeriodInfo;
