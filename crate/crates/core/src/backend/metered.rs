use super::{Backend, BackendConfig, Core, KeyConfig, KeyMode, OpCounts, SlotVector};
use crate::error::Result;

/// Backend that models a finite rotation-key set. Rotations without a direct
/// key are decomposed into power-of-two hops, each charged as a key switch.
/// Slot values are identical to [`super::ReferenceBackend`] for the same call
/// sequence.
pub struct MeteredBackend {
    core: Core,
    keys: KeyConfig,
}

impl MeteredBackend {
    pub fn new(config: BackendConfig, mode: KeyMode) -> Result<Self> {
        let core = Core::new(config)?;
        let keys = KeyConfig::new(mode, config.slot_count)?;
        Ok(MeteredBackend { core, keys })
    }

    pub fn keys(&self) -> &KeyConfig {
        &self.keys
    }
}

impl Backend for MeteredBackend {
    fn name(&self) -> &'static str {
        "metered"
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
        self.core.rotate(x, k, self.keys.hops(k))
    }

    fn rotate_hoisted(&self, x: &SlotVector, amounts: &[i64]) -> Result<Vec<SlotVector>> {
        self.core.rotate_hoisted(x, amounts, |k| self.keys.hops(k))
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotate_by_three_counts_two_hops() {
        let b = MeteredBackend::new(BackendConfig::new(16384, 1), KeyMode::PowerOfTwo).unwrap();
        let x = b.encrypt(&b.encode(&vec![1.0; 16384]).unwrap()).unwrap();
        b.rotate(&x, 3).unwrap();
        let c = b.counts();
        assert_eq!(c.rotations_total, 2);
        assert_eq!(c.rotations_decomposed, 1);
        assert_eq!(c.key_switches, 2);
    }

    #[test]
    fn bsgs_keys_rotate_in_one_hop() {
        let b =
            MeteredBackend::new(BackendConfig::new(256, 1), KeyMode::PowerOfTwoPlusBsgs).unwrap();
        let x = b.encrypt(&b.encode(&vec![1.0; 256]).unwrap()).unwrap();
        b.rotate(&x, 3).unwrap();
        b.rotate(&x, 16 * 7).unwrap();
        assert_eq!(b.counts().rotations_total, 2);
        assert_eq!(b.keys().key_count(), 8 + 32);
    }
}
