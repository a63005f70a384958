//! Einsum evaluation over packed slot vectors.
//!
//! Every expression runs the same five phases: permute each operand into the
//! broadcast layout, broadcast it over the labels it lacks, multiply all
//! operands slot-wise in a balanced tree, rotate-and-sum away the contraction
//! dimensions and mask everything outside the output block.

mod trace;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::backend::{self, Backend, CostReport, OpCounts, Phase, PhaseCost, SlotVector};
use crate::equation::{parse, plan_layout, Alignment, EinsumSpec, Label, LayoutDim, LayoutPlan};
use crate::error::{Error, Result};
use crate::linear_transform::{
    apply_prepared_bsgs, apply_prepared_halevi_shoup, build_expansion_permutation,
    extract_diagonals, is_identity, prepare_bsgs, prepare_halevi_shoup, roll, PermutationPlan,
    PreparedBsgs, PreparedHaleviShoup,
};
use crate::packing::{pack, pad_shape, PackedLayout, PackedTensor, Tensor};
use crate::rotate_sum::{broadcast_dim, mask_top, reduce_dims};

use trace::Recorder;
pub use trace::{ExecutionTrace, Op, OpRecord, PhaseTrace, TraceInput};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformMethod {
    #[default]
    Bsgs,
    HaleviShoup,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineOptions {
    pub transform: TransformMethod,
}

/// An einsum operand: an encrypted packed tensor or a cleartext tensor.
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Encrypted(&'a PackedTensor),
    Plain(&'a Tensor),
}

impl Operand<'_> {
    pub fn logical_shape(&self) -> &[usize] {
        match self {
            Operand::Encrypted(p) => p.logical_shape(),
            Operand::Plain(t) => t.shape(),
        }
    }

    pub fn is_encrypted(&self) -> bool {
        matches!(self, Operand::Encrypted(_))
    }
}

/// How one operand was brought into the broadcast layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMethod {
    /// Already in place.
    None,
    Bsgs,
    HaleviShoup,
    /// Cleartext operand, moved in the clear.
    Cleartext,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OperandAlignment {
    pub operand: usize,
    pub alignment: Alignment,
    pub method: AlignMethod,
    /// Rotation hops spent aligning this operand.
    pub rotations: u64,
}

#[derive(Debug, Clone)]
pub struct EinsumOutput {
    pub tensor: PackedTensor,
    pub layout: LayoutPlan,
    pub trace: ExecutionTrace,
    pub cost: CostReport,
    /// Levels consumed, measured from the highest input level.
    pub depth: u32,
    pub alignments: Vec<OperandAlignment>,
}

#[derive(Debug)]
enum Prepared {
    Bsgs(PreparedBsgs),
    HaleviShoup(PreparedHaleviShoup),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    labels: Vec<Label>,
    padded_shape: Vec<usize>,
    dims: Vec<LayoutDim>,
    method: TransformMethod,
}

/// Einsum evaluator bound to one backend. Encoded permutation diagonals are
/// cached per operand layout and reused across calls.
pub struct Engine<'b> {
    backend: &'b dyn Backend,
    options: EngineOptions,
    cache: Mutex<HashMap<CacheKey, Arc<Prepared>>>,
}

impl<'b> Engine<'b> {
    pub fn new(backend: &'b dyn Backend) -> Self {
        Self::with_options(backend, EngineOptions::default())
    }

    pub fn with_options(backend: &'b dyn Backend, options: EngineOptions) -> Self {
        Engine {
            backend,
            options,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn backend(&self) -> &'b dyn Backend {
        self.backend
    }

    pub fn options(&self) -> EngineOptions {
        self.options
    }

    pub fn cached_transforms(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    pub fn einsum(&self, equation: &str, operands: &[Operand<'_>]) -> Result<EinsumOutput> {
        let slots = self.backend.slot_count();
        let shapes: Vec<Vec<usize>> = operands
            .iter()
            .map(|o| o.logical_shape().to_vec())
            .collect();
        let spec = parse(equation, &shapes)?;
        let layout = plan_layout(&spec, slots)?;
        if !operands.iter().any(Operand::is_encrypted) {
            return Err(Error::NoEncryptedOperand);
        }
        for op in operands {
            if let Operand::Encrypted(p) = op {
                check_packed(p, slots)?;
            }
        }

        let plans: Vec<Option<PermutationPlan>> = operands
            .iter()
            .enumerate()
            .map(|(i, op)| match layout.per_operand()[i] {
                Alignment::Identity => None,
                Alignment::Permute => {
                    let plan = build_expansion_permutation(
                        &spec.inputs()[i],
                        &pad_shape(op.logical_shape()),
                        &layout,
                    );
                    (!is_identity(&plan)).then_some(plan)
                }
            })
            .collect();
        check_levels(operands, &plans, self.backend.max_level())?;

        let rec = Recorder::new(self.backend);
        let mut costs = [OpCounts::default(); 5];
        let mut mark = self.backend.counts();
        let mut close_phase = |idx: usize| {
            let now = self.backend.counts();
            costs[idx] = now - mark;
            mark = now;
        };

        // permute
        rec.set_phase(Phase::Permute);
        let mut alignments = Vec::with_capacity(operands.len());
        let mut ciphers: Vec<(usize, SlotVector)> = Vec::new();
        for (i, op) in operands.iter().enumerate() {
            let Operand::Encrypted(p) = op else {
                alignments.push(OperandAlignment {
                    operand: i,
                    alignment: layout.per_operand()[i],
                    method: AlignMethod::Cleartext,
                    rotations: 0,
                });
                continue;
            };
            let before = self.backend.counts().rotations_total;
            let (vector, method) = match &plans[i] {
                None => (p.vector.clone(), AlignMethod::None),
                Some(plan) => {
                    let key = CacheKey {
                        labels: spec.inputs()[i].clone(),
                        padded_shape: p.padded_shape().to_vec(),
                        dims: layout.dims().to_vec(),
                        method: self.options.transform,
                    };
                    let prepared = self.prepared(&rec, key, plan)?;
                    match &*prepared {
                        Prepared::Bsgs(b) => {
                            (apply_prepared_bsgs(&rec, &p.vector, b)?, AlignMethod::Bsgs)
                        }
                        Prepared::HaleviShoup(h) => (
                            apply_prepared_halevi_shoup(&rec, &p.vector, h)?,
                            AlignMethod::HaleviShoup,
                        ),
                    }
                }
            };
            alignments.push(OperandAlignment {
                operand: i,
                alignment: layout.per_operand()[i],
                method,
                rotations: self.backend.counts().rotations_total - before,
            });
            ciphers.push((i, vector));
        }
        close_phase(0);

        // broadcast
        rec.set_phase(Phase::Broadcast);
        let mut leaves = Vec::with_capacity(operands.len());
        for (i, mut vector) in ciphers {
            for dim in missing_dims(&spec, &layout, i) {
                vector = broadcast_dim(&rec, &vector, dim.stride, dim.padded)?;
            }
            leaves.push(vector);
        }
        let plain = plain_product(&spec, &layout, operands, &plans)?;
        close_phase(1);

        // multiply
        rec.set_phase(Phase::Multiply);
        if let Some(values) = plain {
            leaves.push(rec.encode(&values)?);
        }
        let product = multiply_tree(&rec, leaves)?;
        close_phase(2);

        // reduce
        rec.set_phase(Phase::Reduce);
        let dims: Vec<(usize, usize)> = layout
            .contraction_dims()
            .iter()
            .map(|d| (d.stride, d.padded))
            .collect();
        let reduced = reduce_dims(&rec, &product, &dims)?;
        close_phase(3);

        // mask
        rec.set_phase(Phase::Mask);
        let masked = mask_top(&rec, &reduced, layout.output_count())?;
        close_phase(4);

        let start = operands
            .iter()
            .filter_map(|o| match o {
                Operand::Encrypted(p) => Some(p.level()),
                Operand::Plain(_) => None,
            })
            .max()
            .expect("at least one encrypted operand");
        let depth = start - masked.level();
        let trace = rec.finish(&masked, costs);
        let cost = CostReport {
            totals: costs.iter().fold(OpCounts::default(), |a, &b| a + b),
            levels_consumed: depth,
            per_phase: Phase::ALL
                .iter()
                .zip(costs)
                .map(|(&phase, counts)| PhaseCost { phase, counts })
                .collect(),
        };
        let tensor = PackedTensor {
            layout: PackedLayout {
                logical_shape: spec.output_shape(),
                padded_shape: layout.padded_output_shape(),
                slot_count: slots,
            },
            vector: masked,
        };
        Ok(EinsumOutput {
            tensor,
            layout,
            trace,
            cost,
            depth,
            alignments,
        })
    }

    fn prepared(
        &self,
        backend: &dyn Backend,
        key: CacheKey,
        plan: &PermutationPlan,
    ) -> Result<Arc<Prepared>> {
        if let Some(p) = self.cache.lock().unwrap().get(&key) {
            return Ok(Arc::clone(p));
        }
        let diags = extract_diagonals(plan);
        let prepared = Arc::new(match key.method {
            TransformMethod::Bsgs => Prepared::Bsgs(prepare_bsgs(backend, &diags)?),
            TransformMethod::HaleviShoup => {
                Prepared::HaleviShoup(prepare_halevi_shoup(backend, &diags)?)
            }
        });
        self.cache
            .lock()
            .unwrap()
            .insert(key, Arc::clone(&prepared));
        Ok(prepared)
    }
}

/// Evaluate `equation` with a fresh [`Engine`].
pub fn einsum(
    backend: &dyn Backend,
    equation: &str,
    operands: &[Operand<'_>],
) -> Result<EinsumOutput> {
    Engine::new(backend).einsum(equation, operands)
}

/// Multiply all leaves slot-wise, pairing neighbours level by level. Depth is
/// `ceil(log2(leaves))`.
pub fn multiply_tree(backend: &dyn Backend, leaves: Vec<SlotVector>) -> Result<SlotVector> {
    if leaves.is_empty() {
        return Err(Error::NoEncryptedOperand);
    }
    let mut layer = leaves;
    while layer.len() > 1 {
        let mut next = Vec::with_capacity(layer.len().div_ceil(2));
        let mut it = layer.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(backend::mul(backend, &a, &b)?),
                None => next.push(a),
            }
        }
        layer = next;
    }
    Ok(layer.pop().expect("one leaf left"))
}

fn check_packed(p: &PackedTensor, slots: usize) -> Result<()> {
    if p.vector.len() != slots || p.layout.slot_count != slots {
        return Err(Error::LengthMismatch {
            expected: slots,
            found: p.vector.len(),
        });
    }
    if !p.vector.is_cipher() {
        return Err(Error::ExpectedCipher);
    }
    let expected = pad_shape(p.logical_shape());
    if p.padded_shape() != expected.as_slice() {
        return Err(Error::LayoutMismatch {
            shape: p.logical_shape().to_vec(),
            expected,
            found: p.padded_shape().to_vec(),
        });
    }
    Ok(())
}

/// Replays the level arithmetic of the pipeline and fails before any
/// operation is issued if a multiply would run at level 0.
fn check_levels(
    operands: &[Operand<'_>],
    plans: &[Option<PermutationPlan>],
    max_level: u32,
) -> Result<()> {
    let mut ok = true;
    let mut step = |l: i64| {
        ok &= l > 0;
        l - 1
    };
    let mut leaves = Vec::new();
    let mut start = 0;
    let mut available = u32::MAX;
    let mut any_plain = false;
    for (op, plan) in operands.iter().zip(plans) {
        match op {
            Operand::Encrypted(p) => {
                start = start.max(p.level());
                available = available.min(p.level());
                let l = p.level() as i64;
                leaves.push(if plan.is_some() { step(l) } else { l });
            }
            Operand::Plain(_) => any_plain = true,
        }
    }
    if any_plain {
        leaves.push(max_level as i64);
    }
    while leaves.len() > 1 {
        leaves = leaves
            .chunks(2)
            .map(|c| {
                if c.len() == 2 {
                    step(c[0].min(c[1]))
                } else {
                    c[0]
                }
            })
            .collect();
    }
    let end = step(leaves[0]);
    if ok {
        Ok(())
    } else {
        Err(Error::LevelExhausted {
            needed: (start as i64 - end) as u32,
            available,
        })
    }
}

fn missing_dims<'l>(
    spec: &EinsumSpec,
    layout: &'l LayoutPlan,
    operand: usize,
) -> Vec<&'l LayoutDim> {
    let labels = &spec.inputs()[operand];
    layout
        .dims()
        .iter()
        .filter(|d| !labels.contains(&d.label))
        .collect()
}

/// Align, broadcast and multiply all cleartext operands in the clear.
fn plain_product(
    spec: &EinsumSpec,
    layout: &LayoutPlan,
    operands: &[Operand<'_>],
    plans: &[Option<PermutationPlan>],
) -> Result<Option<Vec<f64>>> {
    let mut acc: Option<Vec<f64>> = None;
    for (i, op) in operands.iter().enumerate() {
        let Operand::Plain(t) = op else { continue };
        let (mut v, _) = pack(t, layout.slot_count())?;
        if let Some(plan) = &plans[i] {
            v = plan.apply(&v);
        }
        for dim in missing_dims(spec, layout, i) {
            for t in 0..dim.padded.trailing_zeros() {
                let shifted = roll(&v, -((dim.stride << t) as i64));
                v.iter_mut().zip(shifted).for_each(|(a, b)| *a += b);
            }
        }
        acc = Some(match acc {
            None => v,
            Some(a) => a.into_iter().zip(v).map(|(a, b)| a * b).collect(),
        });
    }
    Ok(acc)
}
