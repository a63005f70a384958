use super::{Backend, BackendConfig, Core, OpCounts, SlotVector};
use crate::error::Result;

/// Exact `f64` backend. Every nonzero rotation counts as a single hop, as if
/// a key existed for every amount.
pub struct ReferenceBackend {
    core: Core,
}

impl ReferenceBackend {
    pub fn new(config: BackendConfig) -> Result<Self> {
        Ok(ReferenceBackend {
            core: Core::new(config)?,
        })
    }

    fn hops(&self, k: i64) -> u64 {
        u64::from(k.rem_euclid(self.core.slot_count() as i64) != 0)
    }
}

impl Backend for ReferenceBackend {
    fn name(&self) -> &'static str {
        "ref"
    }

    fn slot_count(&self) -> usize {
        self.core.slot_count()
    }

    fn max_level(&self) -> u32 {
        self.core.max_level()
    }

    fn encode(&self, values: &[f64]) -> Result<SlotVector> {
        self.core.encode(values)
    }

    fn encrypt(&self, plain: &SlotVector) -> Result<SlotVector> {
        self.core.encrypt(plain)
    }

    fn decrypt(&self, x: &SlotVector) -> Vec<f64> {
        self.core.decrypt(x)
    }

    fn rotate(&self, x: &SlotVector, k: i64) -> Result<SlotVector> {
        self.core.rotate(x, k, self.hops(k))
    }

    fn rotate_hoisted(&self, x: &SlotVector, amounts: &[i64]) -> Result<Vec<SlotVector>> {
        self.core.rotate_hoisted(x, amounts, |k| self.hops(k))
    }

    fn add(&self, x: &SlotVector, y: &SlotVector) -> Result<SlotVector> {
        self.core.add(x, y)
    }

    fn mul_ct(&self, x: &SlotVector, y: &SlotVector) -> Result<SlotVector> {
        self.core.mul(x, y, false, false)
    }

    fn mul_pt(&self, x: &SlotVector, plain: &SlotVector) -> Result<SlotVector> {
        self.core.mul(x, plain, true, false)
    }

    fn mask(&self, x: &SlotVector, mask: &SlotVector) -> Result<SlotVector> {
        self.core.mul(x, mask, true, true)
    }

    fn counts(&self) -> OpCounts {
        self.core.counts()
    }
}
