use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which rotation keys are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeyMode {
    /// One key per power-of-two magnitude, usable in both directions.
    #[serde(rename = "pow2")]
    PowerOfTwo,
    /// Power-of-two keys plus every baby-step and giant-step key.
    #[serde(rename = "pow2+bsgs")]
    PowerOfTwoPlusBsgs,
}

impl fmt::Display for KeyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyMode::PowerOfTwo => "pow2",
            KeyMode::PowerOfTwoPlusBsgs => "pow2+bsgs",
        })
    }
}

impl FromStr for KeyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pow2" => Ok(KeyMode::PowerOfTwo),
            "pow2+bsgs" => Ok(KeyMode::PowerOfTwoPlusBsgs),
            other => Err(format!(
                "unknown key mode {other:?} (expected pow2 or pow2+bsgs)"
            )),
        }
    }
}

/// Baby/giant split `(n1, n2)` with `n1 * n2 = slot_count` and
/// `n1 = 2^ceil(log2(S) / 2)`.
pub fn bsgs_split(slot_count: usize) -> (usize, usize) {
    let log = slot_count.trailing_zeros();
    let n1 = 1usize << log.div_ceil(2);
    (n1, slot_count / n1)
}

/// Rotation keys available to a metered backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyConfig {
    mode: KeyMode,
    slot_count: usize,
    available: BTreeSet<i64>,
}

impl KeyConfig {
    pub fn new(mode: KeyMode, slot_count: usize) -> Result<Self> {
        if !slot_count.is_power_of_two() {
            return Err(Error::InvalidSlotCount(slot_count));
        }
        let mut available = BTreeSet::new();
        for t in 0..slot_count.trailing_zeros() {
            available.insert(1i64 << t);
            available.insert(-(1i64 << t));
        }
        if mode == KeyMode::PowerOfTwoPlusBsgs {
            let (n1, n2) = bsgs_split(slot_count);
            available.extend((1..n1).map(|i| i as i64));
            available.extend((1..n2).map(|j| (n1 * j) as i64));
        }
        Ok(KeyConfig {
            mode,
            slot_count,
            available,
        })
    }

    pub fn mode(&self) -> KeyMode {
        self.mode
    }

    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    /// Signed rotation amounts that need exactly one key switch.
    pub fn available_rotations(&self) -> &BTreeSet<i64> {
        &self.available
    }

    pub fn power_of_two_amounts(&self) -> Vec<i64> {
        (0..self.slot_count.trailing_zeros())
            .map(|t| 1i64 << t)
            .collect()
    }

    /// Baby-step amounts `0..n1` (index 0 is the identity entry).
    pub fn baby_steps(&self) -> Vec<i64> {
        match self.mode {
            KeyMode::PowerOfTwo => Vec::new(),
            KeyMode::PowerOfTwoPlusBsgs => (0..bsgs_split(self.slot_count).0 as i64).collect(),
        }
    }

    /// Giant-step amounts `n1 * j` for `j` in `0..n2`.
    pub fn giant_steps(&self) -> Vec<i64> {
        match self.mode {
            KeyMode::PowerOfTwo => Vec::new(),
            KeyMode::PowerOfTwoPlusBsgs => {
                let (n1, n2) = bsgs_split(self.slot_count);
                (0..n2).map(|j| (n1 * j) as i64).collect()
            }
        }
    }

    /// Number of generated keys: one per power-of-two magnitude, plus one per
    /// baby index and one per giant index of the BSGS grid.
    pub fn key_count(&self) -> usize {
        self.power_of_two_amounts().len() + self.baby_steps().len() + self.giant_steps().len()
    }

    pub fn is_available(&self, k: i64) -> bool {
        let s = self.slot_count as i64;
        let r = k.rem_euclid(s);
        self.available.contains(&r) || self.available.contains(&(r - s))
    }

    /// Key switches needed to rotate by `k`: 0 for the identity, 1 when a key
    /// exists, otherwise one hop per set bit of `k mod S`.
    pub fn hops(&self, k: i64) -> u64 {
        let r = k.rem_euclid(self.slot_count as i64);
        if r == 0 {
            0
        } else if self.is_available(k) {
            1
        } else {
            r.count_ones() as u64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn key_counts() {
        assert_eq!(
            KeyConfig::new(KeyMode::PowerOfTwo, 16384)
                .unwrap()
                .key_count(),
            14
        );
        assert_eq!(
            KeyConfig::new(KeyMode::PowerOfTwoPlusBsgs, 16384)
                .unwrap()
                .key_count(),
            14 + 256
        );
        assert_eq!(
            KeyConfig::new(KeyMode::PowerOfTwo, 1024)
                .unwrap()
                .key_count(),
            10
        );
    }

    #[test]
    fn split() {
        assert_eq!(bsgs_split(16384), (128, 128));
        assert_eq!(bsgs_split(256), (16, 16));
        assert_eq!(bsgs_split(128), (16, 8));
        assert_eq!(bsgs_split(2), (2, 1));
        assert_eq!(bsgs_split(1), (1, 1));
    }

    #[test]
    fn rotate_by_three_takes_two_hops() {
        let keys = KeyConfig::new(KeyMode::PowerOfTwo, 16384).unwrap();
        assert_eq!(keys.hops(3), 2);
        assert_eq!(keys.hops(0), 0);
        assert_eq!(keys.hops(-4), 1);
        assert_eq!(keys.hops(16384 + 8), 1);
        let bsgs = KeyConfig::new(KeyMode::PowerOfTwoPlusBsgs, 16384).unwrap();
        assert_eq!(bsgs.hops(3), 1);
        assert_eq!(bsgs.hops(128 * 3), 1);
        assert_eq!(bsgs.hops(128 * 3 + 5), 4);
    }

    #[test]
    fn bsgs_amounts_are_direct() {
        let keys = KeyConfig::new(KeyMode::PowerOfTwoPlusBsgs, 1024).unwrap();
        for k in keys.baby_steps().into_iter().chain(keys.giant_steps()) {
            assert!(k == 0 || keys.is_available(k));
        }
    }

    #[test]
    fn bad_slot_count() {
        assert_eq!(
            KeyConfig::new(KeyMode::PowerOfTwo, 100).unwrap_err(),
            Error::InvalidSlotCount(100)
        );
    }

    proptest! {
        #[test]
        fn pow2_hops_are_popcount(k in -100_000i64..100_000, log in 1u32..15) {
            let s = 1usize << log;
            let keys = KeyConfig::new(KeyMode::PowerOfTwo, s).unwrap();
            let r = k.rem_euclid(s as i64);
            let direct = keys.is_available(k);
            prop_assert_eq!(keys.hops(k), if r == 0 { 0 } else if direct { 1 } else { r.count_ones() as u64 });
            if !direct && r != 0 {
                prop_assert_eq!(keys.hops(k), r.count_ones() as u64);
            }
            if r.count_ones() == 1 {
                prop_assert_eq!(keys.hops(k), 1);
            }
        }
    }
}
