//! Trie structures shared by the matching strategies: a compacted trie
//! builder, a signature-searchable trie over reversed pattern heads with
//! de-amortisable exit-node queries, a coloured-ancestor overlay, and the
//! compacted trie of reversed pattern stems used for zero-delay reporting.

mod build;
mod color;
mod qtrie;
mod zfast;

pub use build::{CompactTrie, ROOT};
pub use color::ColorOverlay;
pub use qtrie::CompactQTrie;
pub use zfast::{ExitSearch, QueryCtx, ZFastTrie};
