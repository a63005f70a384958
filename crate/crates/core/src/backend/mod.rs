//! The slot-vector machine.
//!
//! Everything above this module is expressed with seven primitives: encode,
//! encrypt, decrypt, rotate, add, ciphertext-ciphertext multiply and
//! ciphertext-plaintext multiply. Two backends implement them over `f64`
//! slots: [`ReferenceBackend`] counts logical operations, [`MeteredBackend`]
//! additionally models a rotation-key set and charges key decompositions.
//!
//! Scale management is reduced to level counting: every multiply rescales and
//! consumes one level, operands at different levels are aligned by a free
//! modulus drop, and a multiply at level 0 fails with `LevelExhausted`.

mod keys;
mod metered;
mod reference;

use std::ops::{Add, Sub};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use keys::{bsgs_split, KeyConfig, KeyMode};
pub use metered::MeteredBackend;
pub use reference::ReferenceBackend;

/// Starting level of freshly encoded vectors unless configured otherwise.
pub const DEFAULT_LEVEL: u32 = 4;
/// Slot count of the default engine (2^15 ring degree, 2^14 slots).
pub const DEFAULT_SLOTS: usize = 16384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Cipher,
    Plain,
}

#[derive(Debug, Clone)]
pub(crate) enum Slots {
    Dense(Arc<[f64]>),
    /// Plaintexts with few nonzero slots (permutation diagonals, masks).
    Sparse {
        len: usize,
        entries: Arc<[(usize, f64)]>,
    },
}

impl Slots {
    fn len(&self) -> usize {
        match self {
            Slots::Dense(v) => v.len(),
            Slots::Sparse { len, .. } => *len,
        }
    }

    fn to_vec(&self) -> Vec<f64> {
        match self {
            Slots::Dense(v) => v.to_vec(),
            Slots::Sparse { len, entries } => {
                let mut out = vec![0.0; *len];
                for &(i, v) in entries.iter() {
                    out[i] = v;
                }
                out
            }
        }
    }
}

/// Handle to a vector of slots owned by a backend. Immutable: every operation
/// returns a new handle.
#[derive(Debug, Clone)]
pub struct SlotVector {
    id: u64,
    level: u32,
    kind: Kind,
    slots: Slots,
}

impl SlotVector {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn is_cipher(&self) -> bool {
        self.kind == Kind::Cipher
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn values(&self) -> Vec<f64> {
        self.slots.to_vec()
    }
}

/// Operation counters. All fields only ever grow during an execution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    /// Key-switching rotation hops actually executed.
    pub rotations_total: u64,
    /// Extra hops caused by decomposing an amount that has no direct key.
    pub rotations_decomposed: u64,
    pub key_switches: u64,
    /// Decompositions avoided by sharing one across hoisted rotations.
    pub hoisted_decompositions: u64,
    pub ct_ct_mults: u64,
    pub pt_ct_mults: u64,
    pub adds: u64,
    pub masks: u64,
}

impl Sub for OpCounts {
    type Output = OpCounts;

    fn sub(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            rotations_total: self.rotations_total - rhs.rotations_total,
            rotations_decomposed: self.rotations_decomposed - rhs.rotations_decomposed,
            key_switches: self.key_switches - rhs.key_switches,
            hoisted_decompositions: self.hoisted_decompositions - rhs.hoisted_decompositions,
            ct_ct_mults: self.ct_ct_mults - rhs.ct_ct_mults,
            pt_ct_mults: self.pt_ct_mults - rhs.pt_ct_mults,
            adds: self.adds - rhs.adds,
            masks: self.masks - rhs.masks,
        }
    }
}

impl Add for OpCounts {
    type Output = OpCounts;

    fn add(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            rotations_total: self.rotations_total + rhs.rotations_total,
            rotations_decomposed: self.rotations_decomposed + rhs.rotations_decomposed,
            key_switches: self.key_switches + rhs.key_switches,
            hoisted_decompositions: self.hoisted_decompositions + rhs.hoisted_decompositions,
            ct_ct_mults: self.ct_ct_mults + rhs.ct_ct_mults,
            pt_ct_mults: self.pt_ct_mults + rhs.pt_ct_mults,
            adds: self.adds + rhs.adds,
            masks: self.masks + rhs.masks,
        }
    }
}

/// Pipeline phase an operation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Permute,
    Broadcast,
    Multiply,
    Reduce,
    Mask,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::Permute,
        Phase::Broadcast,
        Phase::Multiply,
        Phase::Reduce,
        Phase::Mask,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Permute => "permute",
            Phase::Broadcast => "broadcast",
            Phase::Multiply => "multiply",
            Phase::Reduce => "reduce",
            Phase::Mask => "mask",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCost {
    pub phase: Phase,
    #[serde(flatten)]
    pub counts: OpCounts,
}

/// Costs of one execution: totals, levels consumed and a per-phase breakdown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    #[serde(flatten)]
    pub totals: OpCounts,
    pub levels_consumed: u32,
    pub per_phase: Vec<PhaseCost>,
}

impl CostReport {
    pub fn phase(&self, phase: Phase) -> OpCounts {
        self.per_phase
            .iter()
            .find(|p| p.phase == phase)
            .map(|p| p.counts)
            .unwrap_or_default()
    }
}

/// Gaussian noise injected at encryption and after every multiply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub stddev: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub slot_count: usize,
    pub max_level: u32,
    pub noise: Option<NoiseConfig>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            slot_count: DEFAULT_SLOTS,
            max_level: DEFAULT_LEVEL,
            noise: None,
        }
    }
}

impl BackendConfig {
    pub fn new(slot_count: usize, max_level: u32) -> Self {
        BackendConfig {
            slot_count,
            max_level,
            noise: None,
        }
    }

    pub fn with_noise(mut self, stddev: f64, seed: u64) -> Self {
        self.noise = Some(NoiseConfig { stddev, seed });
        self
    }
}

/// The primitive instruction set. Implementations are shared services: all
/// methods take `&self` and counters are updated under a lock.
pub trait Backend: Send + Sync {
    fn name(&self) -> &'static str;

    fn slot_count(&self) -> usize;

    /// Level of freshly encoded plaintexts.
    fn max_level(&self) -> u32;

    fn encode(&self, values: &[f64]) -> Result<SlotVector>;

    fn encrypt(&self, plain: &SlotVector) -> Result<SlotVector>;

    /// Ciphertexts and plaintexts are both readable.
    fn decrypt(&self, x: &SlotVector) -> Vec<f64>;

    /// Cyclic rotation: `result[i] = x[(i + k) mod S]`. Positive `k` moves data
    /// toward slot 0.
    fn rotate(&self, x: &SlotVector, k: i64) -> Result<SlotVector>;

    /// Rotate one ciphertext by several amounts, sharing a single key-switch
    /// decomposition across all of them.
    fn rotate_hoisted(&self, x: &SlotVector, amounts: &[i64]) -> Result<Vec<SlotVector>>;

    fn add(&self, x: &SlotVector, y: &SlotVector) -> Result<SlotVector>;

    fn mul_ct(&self, x: &SlotVector, y: &SlotVector) -> Result<SlotVector>;

    fn mul_pt(&self, x: &SlotVector, plain: &SlotVector) -> Result<SlotVector>;

    /// A `mul_pt` by a 0/1 plaintext, additionally counted as a mask.
    fn mask(&self, x: &SlotVector, mask: &SlotVector) -> Result<SlotVector>;

    fn counts(&self) -> OpCounts;
}

/// Multiply two vectors, choosing `mul_ct` or `mul_pt` from their kinds.
pub fn mul(backend: &dyn Backend, x: &SlotVector, y: &SlotVector) -> Result<SlotVector> {
    match (x.kind(), y.kind()) {
        (Kind::Cipher, Kind::Cipher) => backend.mul_ct(x, y),
        (Kind::Cipher, Kind::Plain) => backend.mul_pt(x, y),
        (Kind::Plain, Kind::Cipher) => backend.mul_pt(y, x),
        (Kind::Plain, Kind::Plain) => Err(Error::ExpectedCipher),
    }
}

/// Slot arithmetic and bookkeeping shared by both backends.
pub(crate) struct Core {
    slot_count: usize,
    max_level: u32,
    next_id: AtomicU64,
    counts: Mutex<OpCounts>,
    noise: Option<Mutex<(ChaCha8Rng, Normal<f64>)>>,
}

impl Core {
    pub(crate) fn new(config: BackendConfig) -> Result<Self> {
        if !config.slot_count.is_power_of_two() {
            return Err(Error::InvalidSlotCount(config.slot_count));
        }
        let noise = config.noise.filter(|n| n.stddev > 0.0).map(|n| {
            let normal = Normal::new(0.0, n.stddev).expect("finite positive stddev");
            Mutex::new((ChaCha8Rng::seed_from_u64(n.seed), normal))
        });
        Ok(Core {
            slot_count: config.slot_count,
            max_level: config.max_level,
            next_id: AtomicU64::new(0),
            counts: Mutex::new(OpCounts::default()),
            noise,
        })
    }

    pub(crate) fn slot_count(&self) -> usize {
        self.slot_count
    }

    pub(crate) fn max_level(&self) -> u32 {
        self.max_level
    }

    pub(crate) fn counts(&self) -> OpCounts {
        *self.counts.lock().unwrap()
    }

    pub(crate) fn charge(&self, f: impl FnOnce(&mut OpCounts)) {
        f(&mut self.counts.lock().unwrap());
    }

    fn vector(&self, kind: Kind, level: u32, slots: Slots) -> SlotVector {
        SlotVector {
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            level,
            kind,
            slots,
        }
    }

    fn check_len(&self, x: &SlotVector) -> Result<()> {
        if x.len() != self.slot_count {
            return Err(Error::LengthMismatch {
                expected: self.slot_count,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn perturb(&self, values: &mut [f64]) {
        if let Some(noise) = &self.noise {
            let mut guard = noise.lock().unwrap();
            let (rng, normal) = &mut *guard;
            for v in values.iter_mut() {
                *v += normal.sample(rng);
            }
        }
    }

    fn dense(&self, kind: Kind, level: u32, values: Vec<f64>) -> SlotVector {
        self.vector(kind, level, Slots::Dense(values.into()))
    }

    pub(crate) fn encode(&self, values: &[f64]) -> Result<SlotVector> {
        if values.len() != self.slot_count {
            return Err(Error::LengthMismatch {
                expected: self.slot_count,
                found: values.len(),
            });
        }
        let nonzero = values.iter().filter(|v| **v != 0.0).count();
        let slots = if nonzero * 4 <= values.len() {
            let entries: Vec<(usize, f64)> = values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect();
            Slots::Sparse {
                len: values.len(),
                entries: entries.into(),
            }
        } else {
            Slots::Dense(values.into())
        };
        Ok(self.vector(Kind::Plain, self.max_level, slots))
    }

    pub(crate) fn encrypt(&self, plain: &SlotVector) -> Result<SlotVector> {
        if plain.kind != Kind::Plain {
            return Err(Error::ExpectedPlain);
        }
        self.check_len(plain)?;
        let mut values = plain.slots.to_vec();
        self.perturb(&mut values);
        Ok(self.dense(Kind::Cipher, plain.level, values))
    }

    pub(crate) fn decrypt(&self, x: &SlotVector) -> Vec<f64> {
        x.slots.to_vec()
    }

    /// Apply a rotation by `k` that costs `hops` key switches.
    pub(crate) fn rotate(&self, x: &SlotVector, k: i64, hops: u64) -> Result<SlotVector> {
        if x.kind != Kind::Cipher {
            return Err(Error::ExpectedCipher);
        }
        self.check_len(x)?;
        let r = k.rem_euclid(self.slot_count as i64) as usize;
        if r == 0 {
            return Ok(x.clone());
        }
        let values = match &x.slots {
            Slots::Dense(v) => {
                let mut out = Vec::with_capacity(v.len());
                out.extend_from_slice(&v[r..]);
                out.extend_from_slice(&v[..r]);
                out
            }
            sparse => {
                let mut v = sparse.to_vec();
                v.rotate_left(r);
                v
            }
        };
        self.charge(|c| {
            c.rotations_total += hops;
            c.rotations_decomposed += hops.saturating_sub(1);
            c.key_switches += hops;
        });
        Ok(self.dense(Kind::Cipher, x.level, values))
    }

    pub(crate) fn rotate_hoisted(
        &self,
        x: &SlotVector,
        amounts: &[i64],
        hops: impl Fn(i64) -> u64,
    ) -> Result<Vec<SlotVector>> {
        let out = amounts
            .iter()
            .map(|&k| self.rotate(x, k, hops(k)))
            .collect::<Result<Vec<_>>>()?;
        let shared = amounts
            .iter()
            .filter(|&&k| k.rem_euclid(self.slot_count as i64) != 0)
            .count() as u64;
        if shared > 1 {
            self.charge(|c| c.hoisted_decompositions += shared - 1);
        }
        Ok(out)
    }

    pub(crate) fn add(&self, x: &SlotVector, y: &SlotVector) -> Result<SlotVector> {
        self.check_len(x)?;
        self.check_len(y)?;
        let kind = if x.is_cipher() || y.is_cipher() {
            Kind::Cipher
        } else {
            Kind::Plain
        };
        let level = x.level.min(y.level);
        let values = match (&x.slots, &y.slots) {
            (Slots::Dense(a), Slots::Dense(b)) => {
                a.iter().zip(b.iter()).map(|(a, b)| a + b).collect()
            }
            (Slots::Dense(d), Slots::Sparse { entries, .. })
            | (Slots::Sparse { entries, .. }, Slots::Dense(d)) => {
                let mut out = d.to_vec();
                for &(i, v) in entries.iter() {
                    out[i] += v;
                }
                out
            }
            (a, b) => a
                .to_vec()
                .iter()
                .zip(b.to_vec())
                .map(|(a, b)| a + b)
                .collect(),
        };
        self.charge(|c| c.adds += 1);
        Ok(self.dense(kind, level, values))
    }

    /// Slotwise product followed by a rescale.
    pub(crate) fn mul(
        &self,
        x: &SlotVector,
        y: &SlotVector,
        plain_rhs: bool,
        is_mask: bool,
    ) -> Result<SlotVector> {
        if x.kind != Kind::Cipher || (!plain_rhs && y.kind != Kind::Cipher) {
            return Err(Error::ExpectedCipher);
        }
        if plain_rhs && y.kind != Kind::Plain {
            return Err(Error::ExpectedPlain);
        }
        self.check_len(x)?;
        self.check_len(y)?;
        let level = x.level.min(y.level);
        if level == 0 {
            return Err(Error::LevelExhausted {
                needed: 1,
                available: 0,
            });
        }
        let mut values = match (&x.slots, &y.slots) {
            (Slots::Dense(a), Slots::Sparse { entries, .. }) => {
                let mut out = vec![0.0; a.len()];
                for &(i, v) in entries.iter() {
                    out[i] = a[i] * v;
                }
                out
            }
            (a, b) => {
                let b = b.to_vec();
                a.to_vec().iter().zip(b).map(|(a, b)| a * b).collect()
            }
        };
        self.perturb(&mut values);
        self.charge(|c| {
            if plain_rhs {
                c.pt_ct_mults += 1;
            } else {
                c.ct_ct_mults += 1;
            }
            if is_mask {
                c.masks += 1;
            }
        });
        Ok(self.dense(Kind::Cipher, level - 1, values))
    }
}
