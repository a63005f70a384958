//! Plaintext reference einsum by nested loops. Shares no code with the
//! equation parser or the packed pipeline.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::packing::Tensor;

/// Evaluate an explicit-output einsum directly over cleartext tensors.
pub fn naive_einsum_oracle(equation: &str, tensors: &[Tensor]) -> Result<Tensor> {
    let eq: String = equation.chars().filter(|c| !c.is_whitespace()).collect();
    let (lhs, rhs) = eq.split_once("->").ok_or(Error::ImplicitOutput)?;
    if rhs.contains("->") {
        return Err(Error::MalformedEquation(equation.to_string()));
    }
    let bad = |s: &str| s.chars().any(|c| !(c.is_ascii_alphabetic() || c == ','));
    if bad(lhs) || bad(rhs) || rhs.contains(',') {
        return Err(Error::MalformedEquation(equation.to_string()));
    }
    let terms: Vec<Vec<char>> = lhs.split(',').map(|t| t.chars().collect()).collect();
    if terms.len() != tensors.len() {
        return Err(Error::OperandCountMismatch {
            subscripts: terms.len(),
            operands: tensors.len(),
        });
    }

    let mut extent: HashMap<char, usize> = HashMap::new();
    let mut summed: Vec<char> = Vec::new();
    let out: Vec<char> = rhs.chars().collect();
    for (n, (term, t)) in terms.iter().zip(tensors).enumerate() {
        if term.len() != t.shape().len() {
            return Err(Error::RankMismatch {
                operand: n,
                labels: term.len(),
                rank: t.shape().len(),
            });
        }
        for (pos, (&c, &e)) in term.iter().zip(t.shape()).enumerate() {
            if term[..pos].contains(&c) {
                return Err(Error::RepeatedLabel {
                    label: c,
                    operand: Some(n),
                });
            }
            match extent.get(&c) {
                Some(&prev) if prev != e => {
                    return Err(Error::SizeConflict {
                        label: c,
                        first: prev,
                        second: e,
                    })
                }
                _ => {
                    extent.insert(c, e);
                }
            }
            if !out.contains(&c) && !summed.contains(&c) {
                summed.push(c);
            }
        }
    }
    for (pos, &c) in out.iter().enumerate() {
        if out[..pos].contains(&c) {
            return Err(Error::RepeatedLabel {
                label: c,
                operand: None,
            });
        }
        if !extent.contains_key(&c) {
            return Err(Error::UnknownOutputLabel(c));
        }
    }

    let out_shape: Vec<usize> = out.iter().map(|c| extent[c]).collect();
    let sum_shape: Vec<usize> = summed.iter().map(|c| extent[c]).collect();
    let all: Vec<char> = out.iter().chain(&summed).copied().collect();
    // per operand: (position in `all`, element stride) for each axis
    let access: Vec<Vec<(usize, usize)>> = terms
        .iter()
        .zip(tensors)
        .map(|(term, t)| {
            let mut stride = 1;
            let mut axes = vec![(0, 0); term.len()];
            for d in (0..term.len()).rev() {
                axes[d] = (all.iter().position(|c| *c == term[d]).unwrap(), stride);
                stride *= t.shape()[d];
            }
            axes
        })
        .collect();

    let mut index = vec![0usize; all.len()];
    let out_len: usize = out_shape.iter().product();
    if sum_shape.contains(&0) {
        return Tensor::new(out_shape, vec![0.0; out_len]);
    }
    let mut data = Vec::with_capacity(out_len);
    for _ in 0..out_len {
        let mut total = 0.0;
        index[out.len()..].fill(0);
        loop {
            let mut term = 1.0;
            for (t, axes) in tensors.iter().zip(&access) {
                let flat: usize = axes.iter().map(|&(p, s)| index[p] * s).sum();
                term *= t.data()[flat];
            }
            total += term;
            if !advance(&mut index[out.len()..], &sum_shape) {
                break;
            }
        }
        data.push(total);
        advance(&mut index[..out.len()], &out_shape);
    }
    Tensor::new(out_shape, data)
}

/// Odometer increment, last axis fastest. Returns false after wrapping.
fn advance(index: &mut [usize], shape: &[usize]) -> bool {
    for d in (0..index.len()).rev() {
        index[d] += 1;
        if index[d] < shape[d] {
            return true;
        }
        index[d] = 0;
    }
    false
}
