//! Offline string utilities used at preprocessing time: periods, suffix
//! relations, and power-of-two prefix ladders.

use crate::error::Error;

/// The period of a string plus whether the string is properly periodic
/// (period at most half the length).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodInfo {
    pub period: usize,
    pub properly_periodic: bool,
}

/// Smallest `p` with `x[i] = x[i+p]` for all valid `i`, via the classical
/// failure function.
pub fn period_of(x: &[u8]) -> Result<PeriodInfo, Error> {
    if x.is_empty() {
        return Err(Error::EmptyPattern);
    }
    let n = x.len();
    let mut pi = vec![0usize; n];
    for i in 1..n {
        let mut j = pi[i - 1];
        while j > 0 && x[i] != x[j] {
            j = pi[j - 1];
        }
        if x[i] == x[j] {
            j += 1;
        }
        pi[i] = j;
    }
    let period = n - pi[n - 1];
    Ok(PeriodInfo {
        period,
        properly_periodic: 2 * period <= n,
    })
}

/// Whether `p` is a (not necessarily smallest) period of `x`.
pub fn is_period(x: &[u8], p: usize) -> bool {
    p >= 1 && p <= x.len() && (p..x.len()).all(|i| x[i] == x[i - p])
}

pub fn is_suffix(a: &[u8], b: &[u8]) -> bool {
    a.len() <= b.len() && &b[b.len() - a.len()..] == a
}

/// Base-2 logarithm rounded to the nearest integer, floored at 1. All
/// thresholds in the engine derive from this single rounding rule.
pub fn rounded_log2(m: usize) -> usize {
    debug_assert!(m >= 1);
    ((m as f64).log2().round() as usize).max(1)
}

/// One power-of-two prefix of a pattern, annotated with its period.
#[derive(Debug, Clone)]
pub struct Rung {
    pub len: usize,
    pub period: PeriodInfo,
}

/// The power-of-two prefixes of a pattern with lengths up to
/// `|P| - 2*block`, where `block = k * rounded_log2(m)`.
#[derive(Debug, Clone)]
pub struct PrefixLadder {
    pub rungs: Vec<Rung>,
}

pub fn build_ladder(pattern: &[u8], k: usize, l: usize) -> Result<PrefixLadder, Error> {
    let block2 = 2 * k * l;
    if pattern.len() <= block2 {
        return Err(Error::ClassViolation(format!(
            "ladder needs length > {block2}, got {}",
            pattern.len()
        )));
    }
    let max = pattern.len() - block2;
    let mut rungs = Vec::new();
    let mut len = 1usize;
    while len <= max {
        rungs.push(Rung {
            len,
            period: period_of(&pattern[..len])?,
        });
        len *= 2;
    }
    Ok(PrefixLadder { rungs })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Checks the periodicity-lemma consequence on a concrete string: given two
/// verified periods `p1`, `p2` with `p1 + p2 <= |x|`, reports whether their
/// gcd is also a period. Used as a test oracle for the suffix-chain
/// arguments.
pub fn periodicity_check(x: &[u8], p1: usize, p2: usize) -> Result<bool, Error> {
    if !is_period(x, p1) || !is_period(x, p2) {
        return Err(Error::ClassViolation("not a period".into()));
    }
    if p1 + p2 > x.len() {
        return Err(Error::ClassViolation(
            "periods exceed the periodicity-lemma range".into(),
        ));
    }
    Ok(is_period(x, gcd(p1, p2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force smallest period.
    fn naive_period(x: &[u8]) -> usize {
        (1..=x.len()).find(|&p| is_period(x, p)).unwrap()
    }

    #[test]
    fn period_examples() {
        assert_eq!(period_of(b"aaaa").unwrap().period, 1);
        assert_eq!(period_of(b"abaab").unwrap().period, 3);
        assert_eq!(period_of(b"abc").unwrap().period, 3);
        assert!(period_of(b"").is_err());
    }

    #[test]
    fn period_exhaustive_binary() {
        // every binary string up to length 14
        for len in 1..=14usize {
            for bits in 0..(1u32 << len) {
                let s: Vec<u8> = (0..len)
                    .map(|i| if bits >> i & 1 == 1 { b'b' } else { b'a' })
                    .collect();
                assert_eq!(period_of(&s).unwrap().period, naive_period(&s));
            }
        }
    }

    #[test]
    fn suffix_examples() {
        assert!(is_suffix(b"ab", b"cab"));
        assert!(is_suffix(b"ab", b"ab"));
        assert!(!is_suffix(b"ba", b"cab"));
        assert!(is_suffix(b"", b"x"));
    }

    #[test]
    fn rounded_log2_examples() {
        assert_eq!(rounded_log2(1), 1);
        assert_eq!(rounded_log2(2), 1);
        assert_eq!(rounded_log2(3), 2);
        assert_eq!(rounded_log2(4), 2);
        assert_eq!(rounded_log2(200), 8);
    }

    #[test]
    fn ladder_examples() {
        // |P|=100, k*l=10: rung lengths 1..64 all within 100-20=80
        let p = vec![b'a'; 100];
        let ladder = build_ladder(&p, 2, 5).unwrap();
        let lens: Vec<_> = ladder.rungs.iter().map(|r| r.len).collect();
        assert_eq!(lens, vec![1, 2, 4, 8, 16, 32, 64]);

        // |P| = 2kl+1: only the length-1 rung
        let p = vec![b'a'; 21];
        let ladder = build_ladder(&p, 2, 5).unwrap();
        assert_eq!(ladder.rungs.len(), 1);
        assert_eq!(ladder.rungs[0].len, 1);

        // boundary: |P| = 2kl is rejected
        let p = vec![b'a'; 20];
        assert!(build_ladder(&p, 2, 5).is_err());

        // periodic rungs carry their period
        let p: Vec<u8> = b"ab".repeat(50);
        let ladder = build_ladder(&p, 2, 5).unwrap();
        let rung16 = ladder.rungs.iter().find(|r| r.len == 16).unwrap();
        assert_eq!(rung16.period.period, 2);
    }

    #[test]
    fn periodicity_check_examples() {
        assert_eq!(periodicity_check(b"aaaa", 1, 2).unwrap(), true);
        assert_eq!(periodicity_check(b"ababab", 2, 4).unwrap(), true);
        assert!(periodicity_check(b"abaab", 3, 5).is_err()); // 3+5 > 5
        assert!(periodicity_check(b"abc", 1, 2).is_err()); // 1 is not a period
    }

    proptest! {
        #[test]
        fn period_matches_naive(s in proptest::collection::vec(prop_oneof![Just(b'a'), Just(b'b')], 1..64)) {
            prop_assert_eq!(period_of(&s).unwrap().period, naive_period(&s));
        }
    }
}
