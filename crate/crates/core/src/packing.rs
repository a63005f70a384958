//! Row-major packing of dense tensors into one-dimensional slot vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, SlotVector};
use crate::error::{Error, Result};

/// A dense real tensor stored row-major. Serializes as
/// `{"shape": [..], "data": [..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<RawTensor> for Tensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        Tensor::new(raw.shape, raw.data)
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected = product(&shape);
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                shape,
                expected,
                found: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = product(&shape);
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let n = product(&shape);
        let strides = row_major_strides(&shape);
        let mut index = vec![0; shape.len()];
        let data = (0..n)
            .map(|flat| {
                for (slot, (&s, &d)) in index.iter_mut().zip(strides.iter().zip(&shape)) {
                    *slot = (flat / s) % d;
                }
                f(&index)
            })
            .collect();
        Tensor { shape, data }
    }

    /// Values drawn uniformly from `[-1, 1)`.
    pub fn random<R: Rng + ?Sized>(shape: Vec<usize>, rng: &mut R) -> Self {
        let n = product(&shape);
        let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        let offset: usize = index
            .iter()
            .zip(row_major_strides(&self.shape))
            .map(|(i, s)| i * s)
            .sum();
        self.data[offset]
    }

    /// Largest absolute elementwise difference. Shapes must match.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn product(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Smallest power of two not below `extent`.
pub fn pad_extent(extent: usize) -> usize {
    extent.max(1).next_power_of_two()
}

pub fn pad_shape(shape: &[usize]) -> Vec<usize> {
    shape.iter().map(|&e| pad_extent(e)).collect()
}

pub fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Shape metadata of a packed tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedLayout {
    pub logical_shape: Vec<usize>,
    pub padded_shape: Vec<usize>,
    pub slot_count: usize,
}

impl PackedLayout {
    pub fn new(logical_shape: Vec<usize>, slot_count: usize) -> Result<Self> {
        let padded_shape = pad_shape(&logical_shape);
        let required = product(&padded_shape);
        if required > slot_count {
            return Err(Error::DoesNotFit {
                required,
                slots: slot_count,
            });
        }
        Ok(PackedLayout {
            logical_shape,
            padded_shape,
            slot_count,
        })
    }

    /// Slot offsets of every logical element, in logical row-major order.
    pub fn offsets(&self) -> impl Iterator<Item = usize> + '_ {
        let logical = row_major_strides(&self.logical_shape);
        let padded = row_major_strides(&self.padded_shape);
        (0..product(&self.logical_shape)).map(move |flat| {
            logical
                .iter()
                .zip(&padded)
                .zip(&self.logical_shape)
                .map(|((&ls, &ps), &d)| ((flat / ls) % d) * ps)
                .sum()
        })
    }
}

/// Flatten `tensor` row-major over its padded shape into `slot_count` slots.
pub fn pack(tensor: &Tensor, slot_count: usize) -> Result<(Vec<f64>, PackedLayout)> {
    let layout = PackedLayout::new(tensor.shape.clone(), slot_count)?;
    let mut slots = vec![0.0; slot_count];
    for (offset, &v) in layout.offsets().zip(&tensor.data) {
        slots[offset] = v;
    }
    Ok((slots, layout))
}

/// Read the logical elements back out of a packed slot vector.
pub fn unpack(slots: &[f64], logical_shape: &[usize], padded_shape: &[usize]) -> Tensor {
    let layout = PackedLayout {
        logical_shape: logical_shape.to_vec(),
        padded_shape: padded_shape.to_vec(),
        slot_count: slots.len(),
    };
    let data = layout.offsets().map(|o| slots[o]).collect();
    Tensor {
        shape: logical_shape.to_vec(),
        data,
    }
}

/// A tensor packed into one backend slot vector.
#[derive(Debug, Clone)]
pub struct PackedTensor {
    pub layout: PackedLayout,
    pub vector: SlotVector,
}

impl PackedTensor {
    pub fn logical_shape(&self) -> &[usize] {
        &self.layout.logical_shape
    }

    pub fn padded_shape(&self) -> &[usize] {
        &self.layout.padded_shape
    }

    pub fn level(&self) -> u32 {
        self.vector.level()
    }
}

/// Pack, encode and encrypt a tensor.
pub fn encrypt_tensor(backend: &dyn Backend, tensor: &Tensor) -> Result<PackedTensor> {
    let (slots, layout) = pack(tensor, backend.slot_count())?;
    let plain = backend.encode(&slots)?;
    let vector = backend.encrypt(&plain)?;
    Ok(PackedTensor { layout, vector })
}

/// Decrypt and unpack.
pub fn decrypt_tensor(backend: &dyn Backend, packed: &PackedTensor) -> Tensor {
    let slots = backend.decrypt(&packed.vector);
    unpack(
        &slots,
        &packed.layout.logical_shape,
        &packed.layout.padded_shape,
    )
}
