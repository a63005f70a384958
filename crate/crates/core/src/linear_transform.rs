//! Slot permutations as diagonal-form matrix-vector products.
//!
//! A permutation matrix `M` over `S` slots is stored by its generalized
//! diagonals `d_k[i] = M[i, (i + k) mod S]`. Halevi–Shoup evaluates
//! `sum_k d_k * rot(x, k)` with one rotation per nonzero offset. Baby-step
//! giant-step splits `k = n1*j + i` and pre-rotates the cleartext diagonals by
//! `-n1*j`, so only the `n1` baby rotations of `x` and one giant rotation per
//! nonempty group are homomorphic:
//!
//! ```text
//! y = sum_j rot( sum_i roll(d_{n1 j + i}, -n1 j) * rot(x, i), n1 j )
//! ```
//!
//! Only nonzero diagonals are materialized; empty giant groups are skipped.

use std::collections::BTreeMap;

use crate::backend::{bsgs_split, Backend, SlotVector};
use crate::equation::{Label, LayoutPlan};
use crate::error::{Error, Result};
use crate::packing::row_major_strides;

/// Partial slot map `dest <- src`, injective on its domain. Destinations
/// outside the domain are zero after application.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PermutationPlan {
    size: usize,
    map: BTreeMap<usize, usize>,
}

impl PermutationPlan {
    /// Panics if an index is out of range or the map is not injective.
    pub fn new(size: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut map = BTreeMap::new();
        let mut used = vec![false; size];
        for (dest, src) in entries {
            assert!(dest < size && src < size, "slot index out of range");
            assert!(!used[src], "source slot {src} mapped twice");
            assert!(
                map.insert(dest, src).is_none(),
                "destination slot {dest} mapped twice"
            );
            used[src] = true;
        }
        PermutationPlan { size, map }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `(dest, src)` pairs in destination order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.map.iter().map(|(&d, &s)| (d, s))
    }

    pub fn src(&self, dest: usize) -> Option<usize> {
        self.map.get(&dest).copied()
    }

    pub fn domain_len(&self) -> usize {
        self.map.len()
    }

    /// Apply in the clear.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        for (&d, &s) in &self.map {
            out[d] = v[s];
        }
        out
    }
}

/// Move an operand packed row-major over `operand_padded_shape` to its
/// broadcast positions, with index 0 for every label it lacks.
pub fn build_expansion_permutation(
    operand_labels: &[Label],
    operand_padded_shape: &[usize],
    layout: &LayoutPlan,
) -> PermutationPlan {
    let sizes: Vec<usize> = operand_labels.iter().map(|&l| layout.size(l)).collect();
    let targets: Vec<usize> = operand_labels.iter().map(|&l| layout.stride(l)).collect();
    let src_strides = row_major_strides(operand_padded_shape);
    let count: usize = sizes.iter().product();
    let logical_strides = row_major_strides(&sizes);

    let entries = (0..count).map(|flat| {
        let mut dest = 0;
        let mut src = 0;
        for d in 0..sizes.len() {
            let idx = (flat / logical_strides[d]) % sizes[d];
            dest += idx * targets[d];
            src += idx * src_strides[d];
        }
        (dest, src)
    });
    PermutationPlan::new(layout.slot_count(), entries)
}

/// True iff every mapped slot stays in place (vacuously true when empty).
pub fn is_identity(plan: &PermutationPlan) -> bool {
    plan.entries().all(|(d, s)| d == s)
}

/// Nonzero generalized diagonals, stored sparsely by offset.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalSet {
    size: usize,
    diagonals: BTreeMap<usize, Vec<(usize, f64)>>,
}

impl DiagonalSet {
    pub fn size(&self) -> usize {
        self.size
    }

    /// Diagonals of a dense square matrix given row by row.
    pub fn from_matrix(rows: &[Vec<f64>]) -> Self {
        let size = rows.len();
        let mut diagonals: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), size, "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    let k = (j + size - i) % size;
                    diagonals.entry(k).or_default().push((i, v));
                }
            }
        }
        DiagonalSet { size, diagonals }
    }

    /// Offsets with at least one nonzero entry, ascending.
    pub fn offsets(&self) -> impl Iterator<Item = usize> + '_ {
        self.diagonals.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.diagonals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagonals.is_empty()
    }

    pub fn entries(&self, offset: usize) -> &[(usize, f64)] {
        self.diagonals
            .get(&offset)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Dense diagonal `d_k`, if nonzero.
    pub fn diagonal(&self, offset: usize) -> Option<Vec<f64>> {
        self.diagonals.get(&offset).map(|entries| {
            let mut d = vec![0.0; self.size];
            for &(i, v) in entries {
                d[i] = v;
            }
            d
        })
    }

    /// `M[row, col]` reconstructed from the diagonals.
    pub fn matrix_entry(&self, row: usize, col: usize) -> f64 {
        let k = (col + self.size - row) % self.size;
        self.entries(k)
            .iter()
            .find(|(i, _)| *i == row)
            .map_or(0.0, |&(_, v)| v)
    }
}

/// `d_{(src - dest) mod S}[dest] = 1` for every mapped slot.
pub fn extract_diagonals(plan: &PermutationPlan) -> DiagonalSet {
    let size = plan.size();
    let mut diagonals: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (dest, src) in plan.entries() {
        let k = (src + size - dest) % size;
        diagonals.entry(k).or_default().push((dest, 1.0));
    }
    DiagonalSet { size, diagonals }
}

/// Cleartext cyclic shift with the rotation convention `out[i] = v[(i + k) mod n]`.
pub fn roll(v: &[f64], k: i64) -> Vec<f64> {
    let mut out = v.to_vec();
    if !v.is_empty() {
        out.rotate_left(k.rem_euclid(v.len() as i64) as usize);
    }
    out
}

fn check_level(x: &SlotVector) -> Result<()> {
    if x.level() == 0 {
        return Err(Error::LevelExhausted {
            needed: 1,
            available: 0,
        });
    }
    Ok(())
}

fn check_size(backend: &dyn Backend, diags: &DiagonalSet) -> Result<()> {
    if diags.size() != backend.slot_count() {
        return Err(Error::LengthMismatch {
            expected: backend.slot_count(),
            found: diags.size(),
        });
    }
    Ok(())
}

fn sum_all(backend: &dyn Backend, terms: Vec<SlotVector>) -> Result<Option<SlotVector>> {
    let mut iter = terms.into_iter();
    let Some(mut acc) = iter.next() else {
        return Ok(None);
    };
    for t in iter {
        acc = backend.add(&acc, &t)?;
    }
    Ok(Some(acc))
}

fn zero_result(backend: &dyn Backend, x: &SlotVector) -> Result<SlotVector> {
    let zero = backend.encode(&vec![0.0; backend.slot_count()])?;
    backend.mul_pt(x, &zero)
}

/// Encoded Halevi–Shoup diagonals, reusable across applications.
#[derive(Debug, Clone)]
pub struct PreparedHaleviShoup {
    terms: Vec<(usize, SlotVector)>,
}

pub fn prepare_halevi_shoup(
    backend: &dyn Backend,
    diags: &DiagonalSet,
) -> Result<PreparedHaleviShoup> {
    check_size(backend, diags)?;
    let terms = diags
        .offsets()
        .map(|k| {
            Ok((
                k,
                backend.encode(&diags.diagonal(k).expect("offset present"))?,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(PreparedHaleviShoup { terms })
}

pub fn apply_prepared_halevi_shoup(
    backend: &dyn Backend,
    x: &SlotVector,
    prepared: &PreparedHaleviShoup,
) -> Result<SlotVector> {
    check_level(x)?;
    if prepared.terms.is_empty() {
        return zero_result(backend, x);
    }
    let mut terms = Vec::with_capacity(prepared.terms.len());
    for (k, plain) in &prepared.terms {
        let rotated = backend.rotate(x, *k as i64)?;
        terms.push(backend.mul_pt(&rotated, plain)?);
    }
    Ok(sum_all(backend, terms)?.expect("nonempty"))
}

/// `y = sum_k encode(d_k) * rot(x, k)`: one rotation per nonzero offset `k != 0`,
/// one level.
pub fn apply_halevi_shoup(
    backend: &dyn Backend,
    x: &SlotVector,
    diags: &DiagonalSet,
) -> Result<SlotVector> {
    check_level(x)?;
    let prepared = prepare_halevi_shoup(backend, diags)?;
    apply_prepared_halevi_shoup(backend, x, &prepared)
}

/// Pre-rotated, encoded BSGS diagonals grouped by giant step.
#[derive(Debug, Clone)]
pub struct PreparedBsgs {
    n1: usize,
    baby_steps: Vec<usize>,
    groups: Vec<(usize, Vec<(usize, SlotVector)>)>,
}

impl PreparedBsgs {
    /// Distinct baby-step amounts used, ascending (may include 0).
    pub fn baby_steps(&self) -> &[usize] {
        &self.baby_steps
    }

    /// Giant-step indices `j` with at least one diagonal.
    pub fn giant_steps(&self) -> impl Iterator<Item = usize> + '_ {
        self.groups.iter().map(|(j, _)| *j)
    }

    pub fn n1(&self) -> usize {
        self.n1
    }
}

pub fn prepare_bsgs(backend: &dyn Backend, diags: &DiagonalSet) -> Result<PreparedBsgs> {
    check_size(backend, diags)?;
    let size = diags.size();
    let (n1, _) = bsgs_split(size);
    let mut groups: BTreeMap<usize, Vec<(usize, SlotVector)>> = BTreeMap::new();
    let mut baby = std::collections::BTreeSet::new();
    for k in diags.offsets() {
        let (j, i) = (k / n1, k % n1);
        // roll by -n1*j moves entry idx to idx + n1*j
        let shift = n1 * j;
        let mut dense = vec![0.0; size];
        for &(idx, v) in diags.entries(k) {
            dense[(idx + shift) % size] = v;
        }
        groups
            .entry(j)
            .or_default()
            .push((i, backend.encode(&dense)?));
        baby.insert(i);
    }
    Ok(PreparedBsgs {
        n1,
        baby_steps: baby.into_iter().collect(),
        groups: groups.into_iter().collect(),
    })
}

pub fn apply_prepared_bsgs(
    backend: &dyn Backend,
    x: &SlotVector,
    prepared: &PreparedBsgs,
) -> Result<SlotVector> {
    check_level(x)?;
    if prepared.groups.is_empty() {
        return zero_result(backend, x);
    }
    let amounts: Vec<i64> = prepared.baby_steps.iter().map(|&i| i as i64).collect();
    let rotated = backend.rotate_hoisted(x, &amounts)?;
    let baby: BTreeMap<usize, SlotVector> =
        prepared.baby_steps.iter().copied().zip(rotated).collect();

    let mut acc: Option<SlotVector> = None;
    for (j, terms) in &prepared.groups {
        let products = terms
            .iter()
            .map(|(i, plain)| backend.mul_pt(&baby[i], plain))
            .collect::<Result<Vec<_>>>()?;
        let mut inner = sum_all(backend, products)?.expect("nonempty group");
        if *j != 0 {
            inner = backend.rotate(&inner, (prepared.n1 * j) as i64)?;
        }
        acc = Some(match acc {
            None => inner,
            Some(a) => backend.add(&a, &inner)?,
        });
    }
    Ok(acc.expect("nonempty"))
}

/// Baby-step giant-step evaluation; same result slots as
/// [`apply_halevi_shoup`], one level.
pub fn apply_bsgs(
    backend: &dyn Backend,
    x: &SlotVector,
    diags: &DiagonalSet,
) -> Result<SlotVector> {
    check_level(x)?;
    let prepared = prepare_bsgs(backend, diags)?;
    apply_prepared_bsgs(backend, x, &prepared)
}
