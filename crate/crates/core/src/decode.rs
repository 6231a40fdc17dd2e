//! The reachability predicate over two data labels and a view label.
//!
//! The source item is read through its producing port (the input port for
//! an input of the start module) and the target item through its consuming
//! port (the output port for an output of the start module). The two root
//! paths are compared; where they split, the answer is a single entry of a
//! short product of view-label matrices:
//!
//! * siblings under one composite: `(Oᵀ × Z × I)[x, y]`;
//! * members of one unfolded recursion: an extra product of cycle matrices
//!   between `Z` and `I` (or between `Oᵀ` and `Z` when the source lies deeper).
//!
//! Products are evaluated as bitmask vector sweeps, never as full matrices.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::DecodeError;
use crate::label::{DataLabel, EdgeLabel, PathRef};
use crate::matrix::{DependencyMatrix, RowMask};
use crate::view_label::{reduce_exponent, MatRef, ViewLabel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct QueryVerdict {
    pub reachable: bool,
    /// Factor matrices that entered the product.
    pub matrices_multiplied: usize,
}

/// Smallest `a`, then smallest `b > a`, with `x^a = x^b`.
pub fn matrix_period(x: &DependencyMatrix) -> (usize, usize) {
    assert!(x.is_square(), "period of a non-square matrix");
    let mut seen: HashMap<DependencyMatrix, usize> = HashMap::new();
    let mut cur = x.clone();
    let mut e = 1;
    loop {
        if let Some(&a) = seen.get(&cur) {
            return (a, e);
        }
        let next = cur.multiply(x);
        seen.insert(cur, e);
        cur = next;
        e += 1;
    }
}

/// `x^e` for `e ≥ 1`, reducing the exponent through the period of `x`.
pub fn matrix_power(x: &DependencyMatrix, e: usize) -> DependencyMatrix {
    assert!(e >= 1, "exponent must be positive");
    let (a, b) = matrix_period(x);
    let e = reduce_exponent(e, a, b);
    let mut acc = x.clone();
    for _ in 1..e {
        acc = acc.multiply(x);
    }
    acc
}

/// Factors of Inputs(e): `I(k,i)` for a composite label, the cycle product
/// from the first member to member `i` for a recursive one.
pub fn inputs_factors(e: EdgeLabel, vl: &ViewLabel) -> Result<Vec<MatRef<'_>>, DecodeError> {
    match e {
        EdgeLabel::Composite { k, i } => Ok(vec![vl.table_i(k, i)?]),
        EdgeLabel::Recursive { s, t, i } => vl.cycle_factors(s, t - 1, i - 1, false),
    }
}

pub fn outputs_factors(e: EdgeLabel, vl: &ViewLabel) -> Result<Vec<MatRef<'_>>, DecodeError> {
    match e {
        EdgeLabel::Composite { k, i } => Ok(vec![vl.table_o(k, i)?]),
        EdgeLabel::Recursive { s, t, i } => vl.cycle_factors(s, t - 1, i - 1, true),
    }
}

fn collapse(e: EdgeLabel, factors: Vec<MatRef<'_>>, vl: &ViewLabel, outputs: bool) -> Result<DependencyMatrix, DecodeError> {
    let mut it = factors.into_iter();
    match it.next() {
        Some(first) => Ok(it.fold(first.into_owned(), |acc, m| acc.multiply(&m))),
        None => {
            let EdgeLabel::Recursive { s, t, .. } = e else {
                unreachable!("composite labels have one factor")
            };
            let c = vl.cycle(s).ok_or_else(|| DecodeError::UnknownEdge(e.to_string()))?;
            let n = if outputs { c.out_arity[t - 1] } else { c.in_arity[t - 1] };
            Ok(DependencyMatrix::identity(n))
        }
    }
}

/// Reachability from the inputs of the node above `e` to the inputs of the
/// node below it.
pub fn inputs_matrix(e: EdgeLabel, vl: &ViewLabel) -> Result<DependencyMatrix, DecodeError> {
    vl.check_visible(e)?;
    collapse(e, inputs_factors(e, vl)?, vl, false)
}

/// Outputs of the node above `e` × outputs of the node below it.
pub fn outputs_matrix(e: EdgeLabel, vl: &ViewLabel) -> Result<DependencyMatrix, DecodeError> {
    vl.check_visible(e)?;
    collapse(e, outputs_factors(e, vl)?, vl, true)
}

/// Running row vector plus a count of the factors applied to it.
struct Sweep {
    v: RowMask,
    used: usize,
}

impl Sweep {
    /// `v ← v × m`.
    fn forward(&mut self, m: &DependencyMatrix) {
        self.v = m.row_vector_product(self.v);
        self.used += 1;
    }

    /// `v ← v × mᵀ`.
    fn backward(&mut self, m: &DependencyMatrix) {
        self.v = m.column_vector_product(self.v);
        self.used += 1;
    }

    /// Forward through the Inputs chain of `labels`.
    fn inputs(&mut self, labels: impl Iterator<Item = EdgeLabel>, vl: &ViewLabel) -> Result<(), DecodeError> {
        for e in labels {
            for f in inputs_factors(e, vl)? {
                self.forward(&f);
            }
        }
        Ok(())
    }

    /// Through the transpose of the Outputs chain of `labels`: the chain is
    /// walked from its far end back to the divergence point.
    fn outputs_transposed(&mut self, labels: &[EdgeLabel], vl: &ViewLabel) -> Result<(), DecodeError> {
        for &e in labels.iter().rev() {
            for f in outputs_factors(e, vl)?.iter().rev() {
                self.backward(f);
            }
        }
        Ok(())
    }

    fn verdict(&self, y: usize) -> QueryVerdict {
        QueryVerdict {
            reachable: self.v >> y & 1 == 1,
            matrices_multiplied: self.used,
        }
    }
}

fn no() -> QueryVerdict {
    QueryVerdict {
        reachable: false,
        matrices_multiplied: 0,
    }
}

fn check_path(p: PathRef<'_>, vl: &ViewLabel) -> Result<(), DecodeError> {
    p.iter().try_for_each(|e| vl.check_visible(e))
}

/// Does the target item `d2` depend on the source item `d1` in the view?
pub fn decode(d1: &DataLabel, d2: &DataLabel, vl: &ViewLabel) -> Result<QueryVerdict, DecodeError> {
    for d in [d1, d2] {
        if let Some((p, _)) = d.src_path() {
            check_path(p, vl)?;
        }
        if let Some((p, _)) = d.dst_path() {
            check_path(p, vl)?;
        }
    }
    if d1 == d2 {
        return Ok(QueryVerdict {
            reachable: true,
            matrices_multiplied: 0,
        });
    }
    // Nothing reaches an input of the start module, and nothing leaves one
    // of its outputs.
    let Some((tgt_path, y)) = d2.dst_path() else {
        return match d1.src_path() {
            None => {
                let x = d1.dst.as_ref().expect("label has a port").index;
                let y = d2.src.as_ref().expect("label has a port").index;
                Ok(QueryVerdict {
                    reachable: vl.lambda_star_s.get(x - 1, y - 1),
                    matrices_multiplied: 1,
                })
            }
            Some((src_path, x)) => {
                if d1.dst.is_none() {
                    return Ok(no());
                }
                let y = d2.src.as_ref().expect("label has a port").index;
                // Outputs of the start module back down to the source anchor.
                let mut sw = Sweep { v: 1 << (x - 1), used: 0 };
                sw.outputs_transposed(&src_path.to_vec(), vl)?;
                Ok(sw.verdict(y - 1))
            }
        };
    };
    if d2.src.is_none() {
        return Ok(no());
    }
    let Some((src_path, x)) = d1.src_path() else {
        let x = d1.dst.as_ref().expect("label has a port").index;
        let mut sw = Sweep { v: 1 << (x - 1), used: 0 };
        sw.inputs(tgt_path.iter(), vl)?;
        return Ok(sw.verdict(y - 1));
    };
    if d1.dst.is_none() {
        return Ok(no());
    }
    decode_internal(src_path, x, tgt_path, y, vl)
}

fn decode_internal(p1: PathRef<'_>, x: usize, p2: PathRef<'_>, y: usize, vl: &ViewLabel) -> Result<QueryVerdict, DecodeError> {
    let (p, q) = (p1.len(), p2.len());
    let mut l = 0;
    while l < p && l < q && p1.get(l) == p2.get(l) {
        l += 1;
    }
    if l == p || l == q {
        return Ok(no());
    }
    let mismatch = || DecodeError::Mismatch(format!("labels {} and {} cannot be siblings", p1.get(l), p2.get(l)));
    let a1: Vec<EdgeLabel> = p1.iter().collect();
    let mut sw = Sweep { v: 1 << (x - 1), used: 0 };
    match (p1.get(l), p2.get(l)) {
        (EdgeLabel::Composite { k, i }, EdgeLabel::Composite { k: k2, i: j }) if k == k2 => {
            sw.outputs_transposed(&a1[l + 1..], vl)?;
            sw.forward(&*vl.table_z(k, i, j)?);
            sw.inputs((l + 1..q).map(|a| p2.get(a)), vl)?;
        }
        (EdgeLabel::Recursive { s, t, i }, EdgeLabel::Recursive { s: s2, t: t2, i: j }) if s == s2 && t == t2 => {
            let c = vl.cycle(s).ok_or_else(mismatch)?;
            let len = c.len();
            if i < j {
                if p == l + 1 {
                    return Ok(no());
                }
                let spine = c.edges[(t - 1 + i - 1) % len];
                let EdgeLabel::Composite { k, i: branch } = p1.get(l + 1) else {
                    return Err(mismatch());
                };
                if k != spine.k {
                    return Err(mismatch());
                }
                sw.outputs_transposed(&a1[l + 2..], vl)?;
                sw.forward(&*vl.table_z(k, branch, spine.i)?);
                for f in vl.cycle_factors(s, (t - 1 + i) % len, j - i - 1, false)? {
                    sw.forward(&f);
                }
                sw.inputs((l + 1..q).map(|a| p2.get(a)), vl)?;
            } else {
                if q == l + 1 {
                    return Ok(no());
                }
                let spine = c.edges[(t - 1 + j - 1) % len];
                let EdgeLabel::Composite { k, i: branch } = p2.get(l + 1) else {
                    return Err(mismatch());
                };
                if k != spine.k {
                    return Err(mismatch());
                }
                sw.outputs_transposed(&a1[l + 1..], vl)?;
                for f in vl.cycle_factors(s, (t - 1 + j) % len, i - j - 1, true)?.iter().rev() {
                    sw.backward(f);
                }
                sw.forward(&*vl.table_z(k, spine.i, branch)?);
                sw.inputs((l + 2..q).map(|a| p2.get(a)), vl)?;
            }
        }
        _ => return Err(mismatch()),
    }
    Ok(sw.verdict(y - 1))
}
