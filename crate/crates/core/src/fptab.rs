//! Static open-addressing hash tables, built once at preprocessing time and
//! read-only afterwards. Keys are (fingerprint value, length) pairs; lookups
//! probe a power-of-two table and compare keys exactly.

const EMPTY_LEN: u64 = u64::MAX;

fn mix(value: u64, len: u64) -> u64 {
    // splitmix64 finaliser over the combined key
    let mut z = value ^ len.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct StaticFpTable<V> {
    mask: usize,
    keys: Vec<(u64, u64)>,
    vals: Vec<Option<V>>,
    entries: usize,
}

impl<V> StaticFpTable<V> {
    /// Builds the table. Duplicate keys keep the first value inserted; the
    /// number of dropped duplicates is returned so callers can account for
    /// build-time fingerprint collisions.
    pub fn build(pairs: Vec<((u64, u64), V)>) -> (Self, usize) {
        let cap = (pairs.len().max(1) * 2).next_power_of_two();
        let mut t = StaticFpTable {
            mask: cap - 1,
            keys: vec![(0, EMPTY_LEN); cap],
            vals: (0..cap).map(|_| None).collect(),
            entries: 0,
        };
        let mut dropped = 0;
        for ((value, len), v) in pairs {
            debug_assert_ne!(len, EMPTY_LEN);
            let mut h = mix(value, len) as usize & t.mask;
            let mut step = 0;
            loop {
                if t.keys[h].1 == EMPTY_LEN {
                    t.keys[h] = (value, len);
                    t.vals[h] = Some(v);
                    t.entries += 1;
                    break;
                }
                if t.keys[h] == (value, len) {
                    dropped += 1;
                    break;
                }
                step += 1;
                h = (h + step) & t.mask;
            }
        }
        (t, dropped)
    }

    pub fn get(&self, value: u64, len: u64) -> Option<&V> {
        let mut h = mix(value, len) as usize & self.mask;
        let mut step = 0;
        loop {
            let k = self.keys[h];
            if k.1 == EMPTY_LEN {
                return None;
            }
            if k == (value, len) {
                return self.vals[h].as_ref();
            }
            step += 1;
            h = (h + step) & self.mask;
        }
    }

    pub fn len(&self) -> usize {
        self.entries
    }

    /// Words of storage attributed to this table (keys + value slots).
    pub fn accounted_words(&self) -> usize {
        self.keys.len() * 3
    }
}

/// Per-node byte-keyed transition table with the same static layout.
#[derive(Debug, Clone)]
pub struct ByteTable {
    mask: usize,
    slots: Vec<(u8, u32)>,
}

const VACANT: u32 = u32::MAX;

impl ByteTable {
    pub fn build(edges: &[(u8, u32)]) -> Self {
        let cap = (edges.len().max(1) * 2).next_power_of_two();
        let mut slots = vec![(0u8, VACANT); cap];
        let mask = cap - 1;
        for &(b, target) in edges {
            debug_assert_ne!(target, VACANT);
            let mut h = (b as usize).wrapping_mul(0x9e) & mask;
            while slots[h].1 != VACANT {
                debug_assert_ne!(slots[h].0, b);
                h = (h + 1) & mask;
            }
            slots[h] = (b, target);
        }
        ByteTable { mask, slots }
    }

    #[inline]
    pub fn get(&self, b: u8) -> Option<u32> {
        let mut h = (b as usize).wrapping_mul(0x9e) & self.mask;
        loop {
            let (key, target) = self.slots[h];
            if target == VACANT {
                return None;
            }
            if key == b {
                return Some(target);
            }
            h = (h + 1) & self.mask;
        }
    }

    pub fn accounted_words(&self) -> usize {
        self.slots.len()
    }
}
