//! Randomised fingerprints of byte strings and the sliding window of prefix
//! fingerprints that every matching strategy reads.
//!
//! The fingerprint of `S = s_1..s_l` is `sum s_i * r^i mod p` for a prime `p`
//! and a random base `r` drawn once per run. Fingerprints concatenate and
//! strip in O(1): `fp(UV) = fp(U) + r^|U| * fp(V)`, and both halves can be
//! recovered from the whole. Distinct equal-length strings collide with
//! probability at most `1/n^2` when `p > n^3`, for streams of length `n`.

use crate::error::Error;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default modulus: the Mersenne prime 2^61 - 1. Satisfies `p > N^3` for
/// streams up to 2^20 characters while keeping products inside u128.
pub const MERSENNE61: u64 = (1u64 << 61) - 1;

#[inline]
fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

#[inline]
fn add_mod(a: u64, b: u64, p: u64) -> u64 {
    let s = a + b;
    if s >= p {
        s - p
    } else {
        s
    }
}

#[inline]
fn sub_mod(a: u64, b: u64, p: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + p - b
    }
}

fn pow_mod(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for u64 (the listed bases decide all 64-bit
/// integers).
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for q in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == q {
            return true;
        }
        if n % q == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d & 1 == 0 {
        d >>= 1;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// A fingerprint value together with the length of the fingerprinted string.
/// The length is part of the algebra: stripping and concatenation need it,
/// and two fingerprints are comparable only at equal lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    pub value: u64,
    pub len: u64,
}

impl Fingerprint {
    pub const fn empty() -> Self {
        Fingerprint { value: 0, len: 0 }
    }
}

/// Fingerprint parameters: modulus, random base, and power tables.
#[derive(Debug, Clone)]
pub struct FpParams {
    p: u64,
    r: u64,
    r_inv: u64,
    pow: Vec<u64>,
    inv_pow: Vec<u64>,
}

impl FpParams {
    /// Draws `r` uniformly from `[1, p-1]` with a seeded generator and
    /// precomputes `r^i` and `r^-i` for `i <= table_exp`; larger exponents
    /// fall back to fast exponentiation.
    pub fn new(p: u64, seed: u64, table_exp: usize) -> Result<Self, Error> {
        if !is_prime_u64(p) {
            return Err(Error::InvalidConfig(format!("{p} is not prime")));
        }
        if p >= 1u64 << 62 {
            return Err(Error::InvalidConfig("modulus must be below 2^62".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = rng.gen_range(1..p);
        let r_inv = pow_mod(r, p - 2, p);
        let mut pow = Vec::with_capacity(table_exp + 1);
        let mut inv_pow = Vec::with_capacity(table_exp + 1);
        pow.push(1);
        inv_pow.push(1);
        for i in 1..=table_exp {
            pow.push(mul_mod(pow[i - 1], r, p));
            inv_pow.push(mul_mod(inv_pow[i - 1], r_inv, p));
        }
        Ok(FpParams {
            p,
            r,
            r_inv,
            pow,
            inv_pow,
        })
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    pub fn base(&self) -> u64 {
        self.r
    }

    pub fn base_inv(&self) -> u64 {
        self.r_inv
    }

    #[inline]
    pub fn r_pow(&self, e: u64) -> u64 {
        match self.pow.get(e as usize) {
            Some(&v) => v,
            None => pow_mod(self.r, e, self.p),
        }
    }

    #[inline]
    pub fn r_pow_inv(&self, e: u64) -> u64 {
        match self.inv_pow.get(e as usize) {
            Some(&v) => v,
            None => pow_mod(self.r_inv, e, self.p),
        }
    }

    /// Fingerprint of a byte string, characters taken as their numeric codes.
    pub fn fp_of(&self, s: &[u8]) -> Fingerprint {
        let mut value = 0u64;
        let mut rp = 1u64;
        for &c in s {
            rp = mul_mod(rp, self.r, self.p);
            value = add_mod(value, mul_mod(c as u64, rp, self.p), self.p);
        }
        Fingerprint {
            value,
            len: s.len() as u64,
        }
    }

    /// Fingerprint of `UV` from the fingerprints of `U` and `V`.
    #[inline]
    pub fn concat(&self, u: Fingerprint, v: Fingerprint) -> Fingerprint {
        Fingerprint {
            value: add_mod(u.value, mul_mod(self.r_pow(u.len), v.value, self.p), self.p),
            len: u.len + v.len,
        }
    }

    /// Fingerprint of `V` given `fp(UV)` and `fp(U)`.
    pub fn strip_prefix(&self, uv: Fingerprint, u: Fingerprint) -> Result<Fingerprint, Error> {
        if u.len > uv.len {
            return Err(Error::LengthMismatch);
        }
        Ok(self.strip_prefix_unchecked(uv, u))
    }

    #[inline]
    pub(crate) fn strip_prefix_unchecked(&self, uv: Fingerprint, u: Fingerprint) -> Fingerprint {
        debug_assert!(u.len <= uv.len);
        Fingerprint {
            value: mul_mod(
                sub_mod(uv.value, u.value, self.p),
                self.r_pow_inv(u.len),
                self.p,
            ),
            len: uv.len - u.len,
        }
    }

    /// Fingerprint of `U` given `fp(UV)` and `fp(V)`.
    pub fn strip_suffix(&self, uv: Fingerprint, v: Fingerprint) -> Result<Fingerprint, Error> {
        if v.len > uv.len {
            return Err(Error::LengthMismatch);
        }
        let ulen = uv.len - v.len;
        Ok(Fingerprint {
            value: sub_mod(uv.value, mul_mod(self.r_pow(ulen), v.value, self.p), self.p),
            len: ulen,
        })
    }

    /// Fingerprint of `U^t` from `fp(U)`, via the geometric series
    /// `1 + r^|U| + ... + r^{(t-1)|U|}`.
    pub fn repeat(&self, u: Fingerprint, t: u64) -> Fingerprint {
        let rl = self.r_pow(u.len);
        let series = if rl == 1 {
            t % self.p
        } else {
            // (rl^t - 1) / (rl - 1)
            let num = sub_mod(pow_mod(rl, t, self.p), 1, self.p);
            let den_inv = pow_mod(sub_mod(rl, 1, self.p), self.p - 2, self.p);
            mul_mod(num, den_inv, self.p)
        };
        Fingerprint {
            value: mul_mod(u.value, series, self.p),
            len: u.len * t,
        }
    }

    pub fn accounted_words(&self) -> usize {
        4 + self.pow.len() + self.inv_pow.len()
    }
}

/// Circular buffer of the fingerprints of the most recent `capacity` stream
/// prefixes. After `l >= capacity` arrivals exactly the prefixes ending at
/// positions `l-capacity+1 ..= l` are retrievable; older positions report an
/// eviction error, never a stale value. Position 0 stands for the empty
/// prefix and stays retrievable until it leaves the window.
///
/// Each slot also carries `r^-pos`, maintained incrementally, so substring
/// fingerprints need no exponentiation: they take one subtraction and one
/// multiplication regardless of the stream position.
#[derive(Debug, Clone)]
pub struct PrefixFpBuffer {
    vals: Vec<(u64, u64)>,
    capacity: u64,
    consumed: u64,
    last: Fingerprint,
    last_inv_pow: u64,
}

impl PrefixFpBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        PrefixFpBuffer {
            vals: vec![(0, 1); capacity],
            capacity: capacity as u64,
            consumed: 0,
            last: Fingerprint::empty(),
            last_inv_pow: 1,
        }
    }

    /// Number of characters consumed so far (the current position).
    #[inline]
    pub fn position(&self) -> u64 {
        self.consumed
    }

    pub fn capacity(&self) -> usize {
        self.capacity as usize
    }

    /// Consumes one character in O(1): extends the running prefix
    /// fingerprint and overwrites the oldest slot.
    pub fn push(&mut self, c: u8, params: &FpParams) {
        self.consumed += 1;
        let ch = Fingerprint {
            value: mul_mod(c as u64, params.r, params.p),
            len: 1,
        };
        self.last = params.concat(self.last, ch);
        self.last_inv_pow = mul_mod(self.last_inv_pow, params.r_inv, params.p);
        debug_assert_eq!(self.last.len, self.consumed);
        let idx = (self.consumed % self.capacity) as usize;
        self.vals[idx] = (self.last.value, self.last_inv_pow);
    }

    #[inline]
    fn low(&self) -> u64 {
        self.consumed.saturating_sub(self.capacity - 1)
    }

    #[inline]
    fn slot(&self, pos: u64) -> Result<(u64, u64), Error> {
        if pos > self.consumed || pos < self.low() {
            return Err(Error::Evicted { position: pos });
        }
        if pos == 0 {
            return Ok((0, 1));
        }
        Ok(self.vals[(pos % self.capacity) as usize])
    }

    /// Fingerprint of the prefix `t_1..t_pos`.
    #[inline]
    pub fn prefix_fp(&self, pos: u64) -> Result<Fingerprint, Error> {
        let (value, _) = self.slot(pos)?;
        Ok(Fingerprint { value, len: pos })
    }

    /// Fingerprint of `t_from..t_to` (1-based, inclusive) in O(1).
    pub fn substring_fp(
        &self,
        from: u64,
        to: u64,
        params: &FpParams,
    ) -> Result<Fingerprint, Error> {
        if from == 0 || from > to {
            return Err(Error::LengthMismatch);
        }
        let (whole, _) = self.slot(to)?;
        let (head, head_inv) = self.slot(from - 1)?;
        Ok(Fingerprint {
            value: mul_mod(sub_mod(whole, head, params.p), head_inv, params.p),
            len: to - from + 1,
        })
    }

    pub fn accounted_words(&self) -> usize {
        self.vals.len() * 2 + 5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params101() -> FpParams {
        // p=101 with a pinned base r=7 for the worked examples.
        let mut p = FpParams::new(101, 0, 16).unwrap();
        p.r = 7;
        p.r_inv = pow_mod(7, 99, 101);
        p.pow = (0..=16).map(|i| pow_mod(7, i, 101)).collect();
        p.inv_pow = (0..=16).map(|i| pow_mod(p.r_inv, i, 101)).collect();
        p
    }

    #[test]
    fn worked_small_prime_examples() {
        let p = params101();
        assert_eq!(p.fp_of(b"ab"), Fingerprint { value: 27, len: 2 });
        assert_eq!(p.fp_of(b"a"), Fingerprint { value: 73, len: 1 });
        assert_eq!(p.fp_of(b""), Fingerprint::empty());
        let u = p.fp_of(b"a");
        let v = p.fp_of(b"b");
        assert_eq!(p.concat(u, v), p.fp_of(b"ab"));
        assert_eq!(p.strip_prefix(p.fp_of(b"ab"), u).unwrap(), v);
        assert_eq!(p.strip_suffix(p.fp_of(b"ab"), v).unwrap(), u);
    }

    #[test]
    fn concat_identities() {
        let p = FpParams::new(MERSENNE61, 7, 64).unwrap();
        let x = p.fp_of(b"hello");
        assert_eq!(p.concat(x, Fingerprint::empty()), x);
        assert_eq!(p.concat(Fingerprint::empty(), x), x);
        assert_eq!(p.strip_prefix(x, Fingerprint::empty()).unwrap(), x);
        assert_eq!(p.strip_prefix(x, x).unwrap(), Fingerprint::empty());
        assert_eq!(p.strip_suffix(x, Fingerprint::empty()).unwrap(), x);
    }

    #[test]
    fn strip_length_errors() {
        let p = FpParams::new(MERSENNE61, 7, 64).unwrap();
        let short = p.fp_of(b"ab");
        let long = p.fp_of(b"abcd");
        assert_eq!(p.strip_prefix(short, long), Err(Error::LengthMismatch));
        assert_eq!(p.strip_suffix(short, long), Err(Error::LengthMismatch));
    }

    #[test]
    fn repeat_matches_direct() {
        let p = FpParams::new(MERSENNE61, 3, 64).unwrap();
        let u = p.fp_of(b"abz");
        for t in 0..10u64 {
            let direct = p.fp_of(&b"abz".repeat(t as usize));
            assert_eq!(p.repeat(u, t), direct, "t={t}");
        }
    }

    #[test]
    fn buffer_push_and_eviction() {
        let p = FpParams::new(MERSENNE61, 1, 64).unwrap();
        let mut b = PrefixFpBuffer::new(2);
        b.push(b'a', &p);
        assert_eq!(b.prefix_fp(1).unwrap(), p.fp_of(b"a"));
        b.push(b'b', &p);
        assert_eq!(b.prefix_fp(2).unwrap(), p.fp_of(b"ab"));
        b.push(b'c', &p);
        // capacity 2, three arrivals: position 1 (and 0) must now error
        assert_eq!(b.prefix_fp(1), Err(Error::Evicted { position: 1 }));
        assert_eq!(b.prefix_fp(0), Err(Error::Evicted { position: 0 }));
        assert_eq!(b.prefix_fp(3).unwrap(), p.fp_of(b"abc"));
    }

    #[test]
    fn buffer_substrings() {
        let p = FpParams::new(MERSENNE61, 11, 64).unwrap();
        let mut b = PrefixFpBuffer::new(8);
        for &c in b"xab" {
            b.push(c, &p);
        }
        assert_eq!(b.substring_fp(2, 3, &p).unwrap(), p.fp_of(b"ab"));
        assert_eq!(b.substring_fp(1, 3, &p).unwrap(), p.fp_of(b"xab"));
        assert_eq!(b.substring_fp(3, 3, &p).unwrap(), p.fp_of(b"b"));
    }

    #[test]
    fn collision_rate_sanity() {
        use rand::RngCore;
        let p = FpParams::new(MERSENNE61, 99, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 32usize;
        let mut collisions = 0u64;
        let trials = 1_000_000;
        let mut a = vec![0u8; n];
        let mut b = vec![0u8; n];
        for _ in 0..trials {
            rng.fill_bytes(&mut a);
            rng.fill_bytes(&mut b);
            if a != b && p.fp_of(&a).value == p.fp_of(&b).value {
                collisions += 1;
            }
        }
        // loose band around the 1/n^2 bound for p > n^3
        let bound = 10.0 * (n as f64).powi(2) / MERSENNE61 as f64 * trials as f64;
        assert!(collisions as f64 <= bound.max(1.0), "collisions={collisions}");
    }

    proptest! {
        #[test]
        fn concat_strip_round_trip(u in proptest::collection::vec(any::<u8>(), 0..64),
                                   v in proptest::collection::vec(any::<u8>(), 0..64)) {
            let p = FpParams::new(MERSENNE61, 5, 128).unwrap();
            let fu = p.fp_of(&u);
            let fv = p.fp_of(&v);
            let mut uv = u.clone();
            uv.extend_from_slice(&v);
            let fuv = p.fp_of(&uv);
            prop_assert_eq!(p.concat(fu, fv), fuv);
            prop_assert_eq!(p.strip_prefix(fuv, fu).unwrap(), fv);
            prop_assert_eq!(p.strip_suffix(fuv, fv).unwrap(), fu);
        }

        #[test]
        fn buffer_matches_direct_eval(text in proptest::collection::vec(any::<u8>(), 1..200),
                                      seed in any::<u64>()) {
            let p = FpParams::new(MERSENNE61, seed, 256).unwrap();
            let mut b = PrefixFpBuffer::new(32);
            for &c in &text {
                b.push(c, &p);
            }
            let l = text.len() as u64;
            // from-1 must also be retrievable, so start one inside the window
            let lo = l.saturating_sub(30).max(1);
            for from in lo..=l {
                for to in from..=l.min(from + 8) {
                    let direct = p.fp_of(&text[(from - 1) as usize..to as usize]);
                    prop_assert_eq!(b.substring_fp(from, to, &p).unwrap(), direct);
                }
            }
        }
    }
}
