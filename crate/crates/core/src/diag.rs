//! Diagnostics used by equivalence testing.
//!
//! Fingerprint equality can hold for distinct strings. A run is
//! "collision-free" when no comparison that concluded *equal* did so for
//! strings that actually differ; exact-equivalence tests are conditioned on
//! that event. In test mode the session retains the stream text and
//! preprocessing retains the source strings, so every positive comparison can
//! be double-checked against bytes and logged here when it lied.
//!
//! A fingerprint mismatch never lies (equal strings always fingerprint
//! equally), so logging only positive conclusions is complete: any divergence
//! from exact matching traces back to some logged entry.

/// Record of false-equal fingerprint comparisons observed during a session.
#[derive(Debug, Default, Clone)]
pub struct CollisionLog {
    count: u64,
    samples: Vec<&'static str>,
}

impl CollisionLog {
    pub fn record(&mut self, site: &'static str) {
        self.count += 1;
        if self.samples.len() < 16 {
            self.samples.push(site);
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn samples(&self) -> &[&'static str] {
        &self.samples
    }
}

/// Test-mode context threaded through a session: the stream seen so far and
/// the collision log. Absent in production mode.
#[derive(Debug, Default)]
pub struct TestHooks {
    pub text: Vec<u8>,
    pub log: CollisionLog,
}

impl TestHooks {
    /// Verifies that the stream window `t_from..t_to` (1-based, inclusive)
    /// equals `expect`; logs a collision otherwise. Called at sites where a
    /// fingerprint comparison just concluded equality.
    pub fn check_window(&mut self, from: u64, to: u64, expect: &[u8], site: &'static str) {
        if from == 0 || to as usize > self.text.len() {
            return;
        }
        let got = &self.text[(from - 1) as usize..to as usize];
        if got != expect {
            self.log.record(site);
        }
    }

    /// Verifies equality of two retained strings compared via fingerprints.
    pub fn check_eq(&mut self, a: &[u8], b: &[u8], site: &'static str) {
        if a != b {
            self.log.record(site);
        }
    }
}

/// Per-arrival operation counting used by the resource-bound checks. "Heavy"
/// operations are hash probes, signature comparisons, scheduled process
/// steps, and coloured-ancestor queries.
#[derive(Debug, Default, Clone, Copy)]
pub struct OpCounter {
    current: u32,
    pub max_per_arrival: u32,
    pub total: u64,
}

impl OpCounter {
    #[inline]
    pub fn bump(&mut self, n: u32) {
        self.current += n;
        self.total += n as u64;
    }

    /// Closes the current arrival's count.
    pub fn end_arrival(&mut self) {
        if self.current > self.max_per_arrival {
            self.max_per_arrival = self.current;
        }
        self.current = 0;
    }
}
