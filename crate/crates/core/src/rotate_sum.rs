//! Logarithmic rotate-and-add broadcasting and reduction, and the final mask.

use crate::backend::{Backend, SlotVector};
use crate::error::{Error, Result};

fn log2(size: usize) -> u32 {
    assert!(
        size.is_power_of_two(),
        "dimension size {size} is not a power of two"
    );
    size.trailing_zeros()
}

/// Replicate data sitting at index 0 of a dimension across all `size` indices:
/// `x += rot(x, -stride * 2^t)` for `t` in `0..log2(size)`. Level unchanged.
pub fn broadcast_dim(
    backend: &dyn Backend,
    x: &SlotVector,
    stride: usize,
    size: usize,
) -> Result<SlotVector> {
    let mut acc = x.clone();
    for t in 0..log2(size) {
        let shift = (stride << t) as i64;
        let rotated = backend.rotate(&acc, -shift)?;
        acc = backend.add(&acc, &rotated)?;
    }
    Ok(acc)
}

/// Sum over each `(stride, size)` dimension, outermost first:
/// `x += rot(x, stride * 2^t)`. Sums land at index 0 of every reduced
/// dimension; other slots hold partial sums.
pub fn reduce_dims(
    backend: &dyn Backend,
    x: &SlotVector,
    dims: &[(usize, usize)],
) -> Result<SlotVector> {
    let mut acc = x.clone();
    for &(stride, size) in dims {
        for t in 0..log2(size) {
            let shift = (stride << t) as i64;
            let rotated = backend.rotate(&acc, shift)?;
            acc = backend.add(&acc, &rotated)?;
        }
    }
    Ok(acc)
}

/// Keep slots `0..count`, zero the rest. Consumes one level.
pub fn mask_top(backend: &dyn Backend, x: &SlotVector, count: usize) -> Result<SlotVector> {
    let slots = backend.slot_count();
    if count > slots {
        return Err(Error::DoesNotFit {
            required: count,
            slots,
        });
    }
    if x.level() == 0 {
        return Err(Error::LevelExhausted {
            needed: 1,
            available: 0,
        });
    }
    let mut mask = vec![0.0; slots];
    mask[..count].fill(1.0);
    let plain = backend.encode(&mask)?;
    backend.mask(x, &plain)
}
