//! Einsum contractions over packed slot vectors.
//!
//! A tensor is packed row-major into the slots of one vector. Any einsum
//! expression then runs with three primitives: slot-wise add, slot-wise
//! multiply and cyclic rotation. The [`backend`] module provides two
//! cleartext simulators of that instruction set with operation counters and
//! multiplicative-level tracking.
//!
//! ```
//! use einslot::{einsum, encrypt_tensor, decrypt_tensor, BackendConfig, Operand, ReferenceBackend, Tensor};
//!
//! let backend = ReferenceBackend::new(BackendConfig::new(64, 4)).unwrap();
//! let a = Tensor::new(vec![2, 2], vec![1., 2., 3., 4.]).unwrap();
//! let b = Tensor::new(vec![2, 2], vec![5., 6., 7., 8.]).unwrap();
//! let (pa, pb) = (encrypt_tensor(&backend, &a).unwrap(), encrypt_tensor(&backend, &b).unwrap());
//! let out = einsum(&backend, "ij,jk->ik", &[Operand::Encrypted(&pa), Operand::Encrypted(&pb)]).unwrap();
//! assert_eq!(decrypt_tensor(&backend, &out.tensor).data(), &[19., 22., 43., 50.]);
//! assert_eq!(out.depth, 3);
//! ```

pub mod backend;
pub mod engine;
pub mod equation;
pub mod error;
pub mod linear_transform;
pub mod oracle;
pub mod packing;
pub mod rotate_sum;

pub use backend::{
    Backend, BackendConfig, CostReport, KeyConfig, KeyMode, MeteredBackend, OpCounts, Phase,
    ReferenceBackend, SlotVector,
};
pub use engine::{
    einsum, multiply_tree, EinsumOutput, Engine, EngineOptions, ExecutionTrace, Operand,
    TransformMethod,
};
pub use equation::{parse, plan_layout, Alignment, EinsumSpec, Label, LayoutPlan};
pub use error::{Error, Result};
pub use oracle::naive_einsum_oracle;
pub use packing::{
    decrypt_tensor, encrypt_tensor, pack, unpack, PackedLayout, PackedTensor, Tensor,
};
