//! Einsum equation parsing and broadcast layout planning.
//!
//! An expression is executed as a single broadcast-multiply-reduce over one
//! slot vector. The broadcast layout places every contraction label outermost
//! (first-appearance order across the inputs) followed by the output labels in
//! output order. Reducing outer dimensions leaves the results contiguous at the
//! start of the vector, so no compaction permutation is needed afterwards.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::packing::{pad_extent, product};

/// Operands accepted per expression.
pub const MAX_OPERANDS: usize = 8;

/// A single-letter dimension label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Label(char);

impl Label {
    pub fn new(c: char) -> Result<Self> {
        if c.is_ascii_alphabetic() {
            Ok(Label(c))
        } else {
            Err(Error::MalformedEquation(format!(
                "invalid label character {c:?}"
            )))
        }
    }

    pub fn as_char(self) -> char {
        self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn labels_to_string(labels: &[Label]) -> String {
    labels.iter().map(|l| l.0).collect()
}

/// A parsed and validated einsum equation bound to operand shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EinsumSpec {
    inputs: Vec<Vec<Label>>,
    output: Vec<Label>,
    sizes: BTreeMap<Label, usize>,
    contraction: Vec<Label>,
}

impl EinsumSpec {
    pub fn inputs(&self) -> &[Vec<Label>] {
        &self.inputs
    }

    pub fn output(&self) -> &[Label] {
        &self.output
    }

    pub fn sizes(&self) -> &BTreeMap<Label, usize> {
        &self.sizes
    }

    /// Labels summed over, in first-appearance order across the inputs.
    pub fn contraction(&self) -> &[Label] {
        &self.contraction
    }

    pub fn size(&self, label: Label) -> usize {
        self.sizes[&label]
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.output.iter().map(|l| self.sizes[l]).collect()
    }

    pub fn operand_shape(&self, operand: usize) -> Vec<usize> {
        self.inputs[operand].iter().map(|l| self.sizes[l]).collect()
    }

    /// Canonical text form, e.g. `ij,jk->ik`.
    pub fn equation(&self) -> String {
        let inputs: Vec<String> = self.inputs.iter().map(|l| labels_to_string(l)).collect();
        format!("{}->{}", inputs.join(","), labels_to_string(&self.output))
    }
}

fn parse_labels(text: &str, operand: Option<usize>) -> Result<Vec<Label>> {
    let mut labels = Vec::with_capacity(text.len());
    for c in text.chars() {
        let label = Label::new(c)?;
        if labels.contains(&label) {
            return Err(Error::RepeatedLabel { label: c, operand });
        }
        labels.push(label);
    }
    Ok(labels)
}

/// Parse `equation` and bind its labels to the extents in `shapes`.
///
/// Whitespace is ignored. The output must be explicit (`->`); repeated labels
/// within one operand, ellipses and zero extents are rejected.
pub fn parse(equation: &str, shapes: &[Vec<usize>]) -> Result<EinsumSpec> {
    let compact: String = equation.chars().filter(|c| !c.is_whitespace()).collect();
    if let Some(c) = compact
        .chars()
        .find(|&c| !(c.is_ascii_alphabetic() || c == ',' || c == '-' || c == '>'))
    {
        return Err(Error::MalformedEquation(format!(
            "unexpected character {c:?}"
        )));
    }
    let (lhs, rhs) = match compact.split_once("->") {
        Some(parts) => parts,
        None if compact.contains('-') || compact.contains('>') => {
            return Err(Error::MalformedEquation("dangling '-' or '>'".into()))
        }
        None => return Err(Error::ImplicitOutput),
    };
    if rhs.contains("->") || rhs.contains(',') || rhs.contains('-') || rhs.contains('>') {
        return Err(Error::MalformedEquation(
            "expected exactly one \"->\" followed by a single output subscript".into(),
        ));
    }
    if lhs.contains('-') || lhs.contains('>') {
        return Err(Error::MalformedEquation(
            "stray '-' or '>' in inputs".into(),
        ));
    }

    let subscripts: Vec<&str> = lhs.split(',').collect();
    if subscripts.len() != shapes.len() {
        return Err(Error::OperandCountMismatch {
            subscripts: subscripts.len(),
            operands: shapes.len(),
        });
    }
    if subscripts.len() > MAX_OPERANDS {
        return Err(Error::TooManyOperands(subscripts.len()));
    }

    let mut inputs = Vec::with_capacity(subscripts.len());
    let mut sizes: BTreeMap<Label, usize> = BTreeMap::new();
    let mut first_seen: Vec<Label> = Vec::new();
    for (operand, (text, shape)) in subscripts.iter().zip(shapes).enumerate() {
        let labels = parse_labels(text, Some(operand))?;
        if labels.len() != shape.len() {
            return Err(Error::RankMismatch {
                operand,
                labels: labels.len(),
                rank: shape.len(),
            });
        }
        for (&label, &extent) in labels.iter().zip(shape) {
            if extent == 0 {
                return Err(Error::SizeConflict {
                    label: label.0,
                    first: sizes.get(&label).copied().unwrap_or(0),
                    second: 0,
                });
            }
            match sizes.get(&label) {
                Some(&bound) if bound != extent => {
                    return Err(Error::SizeConflict {
                        label: label.0,
                        first: bound,
                        second: extent,
                    })
                }
                Some(_) => {}
                None => {
                    sizes.insert(label, extent);
                    first_seen.push(label);
                }
            }
        }
        inputs.push(labels);
    }

    let output = parse_labels(rhs, None)?;
    if let Some(missing) = output.iter().find(|l| !sizes.contains_key(l)) {
        return Err(Error::UnknownOutputLabel(missing.0));
    }
    let contraction = first_seen
        .into_iter()
        .filter(|l| !output.contains(l))
        .collect();

    Ok(EinsumSpec {
        inputs,
        output,
        sizes,
        contraction,
    })
}

/// How an operand's packed layout relates to the broadcast layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// The operand's labels are a contiguous suffix of the broadcast order, so
    /// its row-major packing already sits at the broadcast positions.
    Identity,
    /// Slots must be moved by a permutation before broadcasting.
    Permute,
}

/// One dimension of the broadcast layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct LayoutDim {
    pub label: Label,
    pub size: usize,
    pub padded: usize,
    pub stride: usize,
}

/// Row-major broadcast layout of one expression inside `slot_count` slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayoutPlan {
    dims: Vec<LayoutDim>,
    contraction_len: usize,
    broadcast_count: usize,
    output_count: usize,
    per_operand: Vec<Alignment>,
    slot_count: usize,
}

impl LayoutPlan {
    /// Dimensions in broadcast order (contraction labels first).
    pub fn dims(&self) -> &[LayoutDim] {
        &self.dims
    }

    pub fn broadcast_order(&self) -> Vec<Label> {
        self.dims.iter().map(|d| d.label).collect()
    }

    pub fn dim(&self, label: Label) -> Option<&LayoutDim> {
        self.dims.iter().find(|d| d.label == label)
    }

    pub fn padded(&self, label: Label) -> usize {
        self.dim(label)
            .map(|d| d.padded)
            .expect("label not in layout")
    }

    pub fn stride(&self, label: Label) -> usize {
        self.dim(label)
            .map(|d| d.stride)
            .expect("label not in layout")
    }

    pub fn size(&self, label: Label) -> usize {
        self.dim(label)
            .map(|d| d.size)
            .expect("label not in layout")
    }

    pub fn contraction_dims(&self) -> &[LayoutDim] {
        &self.dims[..self.contraction_len]
    }

    pub fn output_dims(&self) -> &[LayoutDim] {
        &self.dims[self.contraction_len..]
    }

    /// Product of all padded extents.
    pub fn broadcast_count(&self) -> usize {
        self.broadcast_count
    }

    /// Product of padded output extents; results occupy slots `0..output_count`.
    pub fn output_count(&self) -> usize {
        self.output_count
    }

    pub fn per_operand(&self) -> &[Alignment] {
        &self.per_operand
    }

    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    pub fn padded_output_shape(&self) -> Vec<usize> {
        self.output_dims().iter().map(|d| d.padded).collect()
    }

    /// Slot offset of a multi-index given in broadcast order.
    pub fn offset(&self, index: &[usize]) -> usize {
        self.dims
            .iter()
            .zip(index)
            .map(|(d, &i)| d.stride * i)
            .sum()
    }
}

/// Derive the broadcast layout for `spec` inside `slot_count` slots.
pub fn plan_layout(spec: &EinsumSpec, slot_count: usize) -> Result<LayoutPlan> {
    if !slot_count.is_power_of_two() {
        return Err(Error::InvalidSlotCount(slot_count));
    }
    let order: Vec<Label> = spec
        .contraction
        .iter()
        .chain(spec.output.iter())
        .copied()
        .collect();
    let padded: Vec<usize> = order.iter().map(|l| pad_extent(spec.sizes[l])).collect();

    let broadcast_count = padded
        .iter()
        .try_fold(1usize, |acc, &p| acc.checked_mul(p))
        .unwrap_or(usize::MAX);
    if broadcast_count > slot_count {
        return Err(Error::DoesNotFit {
            required: broadcast_count,
            slots: slot_count,
        });
    }

    let mut dims = Vec::with_capacity(order.len());
    let mut stride = broadcast_count;
    for (&label, &pad) in order.iter().zip(&padded) {
        stride /= pad;
        dims.push(LayoutDim {
            label,
            size: spec.sizes[&label],
            padded: pad,
            stride,
        });
    }
    let contraction_len = spec.contraction.len();
    let output_count = product(&padded[contraction_len..]);

    let per_operand = spec
        .inputs
        .iter()
        .map(|labels| {
            if order.ends_with(labels) {
                Alignment::Identity
            } else {
                Alignment::Permute
            }
        })
        .collect();

    Ok(LayoutPlan {
        dims,
        contraction_len,
        broadcast_count,
        output_count,
        per_operand,
        slot_count,
    })
}
