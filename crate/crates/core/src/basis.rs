// Copyright 2026 The qemforge Authors
// SPDX-License-Identifier: Apache-2.0

//! Catalog of implementable single-qubit basis operations.
//!
//! Ids 1 to 16 are the standard complete basis: Pauli conjugations, the six
//! `π/2`-type rotations and the six projective operations. Ids from 17 on
//! are an over-complete extension used by the linear-programming
//! decomposition: rotations `exp(−iθ n̂·σ/2)` with `θ ∈ {π/3, 2π/3}` about
//! eight Fibonacci-sphere axes, followed by the projectors onto those axes.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use crate::linalg::{c64, CMatrix, RMatrix, C64};
use crate::pauli::{ptm_from_kraus, KrausMap, Pauli, TransferMatrix};

/// Number of entries in the complete single-qubit basis.
pub const COMPLETE_BASIS_SIZE: usize = 16;
/// Identity operation id.
pub const IDENTITY_ID: u16 = 1;
const EXTRA_AXES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct BasisOperation {
    pub id: u16,
    pub name: String,
    pub kraus: KrausMap,
    pub ptm: TransferMatrix,
    pub trace_preserving: bool,
}

impl BasisOperation {
    fn from_operator(id: u16, name: impl Into<String>, op: CMatrix) -> Self {
        let kraus = KrausMap::single(vec![op]).expect("2x2 operator");
        let ptm = ptm_from_kraus(&kraus).expect("valid kraus map");
        let trace_preserving = kraus.is_trace_preserving(1e-12);
        Self {
            id,
            name: name.into(),
            kraus,
            ptm,
            trace_preserving,
        }
    }

    /// The single operator `A` of the map `ρ ↦ AρA†`.
    pub fn operator(&self) -> &CMatrix {
        &self.kraus.operators[0]
    }
}

fn combo(a: C64, pa: Pauli, b: C64, pb: Pauli) -> CMatrix {
    pa.matrix().mapv(|z| z * a) + pb.matrix().mapv(|z| z * b)
}

fn build_table() -> Vec<BasisOperation> {
    let r = c64(FRAC_1_SQRT_2, 0.0);
    let ri = c64(0.0, FRAC_1_SQRT_2);
    let h = c64(0.5, 0.0);
    let hi = c64(0.0, 0.5);
    use Pauli::*;
    let ops: [(&str, CMatrix); 16] = [
        ("I", I.matrix()),
        ("sigma_x", X.matrix()),
        ("sigma_y", Y.matrix()),
        ("sigma_z", Z.matrix()),
        ("R_x", combo(r, I, ri, X)),
        ("R_y", combo(r, I, ri, Y)),
        ("R_z", combo(r, I, ri, Z)),
        ("R_yz", combo(r, Y, r, Z)),
        ("R_zx", combo(r, Z, r, X)),
        ("R_xy", combo(r, X, r, Y)),
        ("pi_x", combo(h, I, h, X)),
        ("pi_y", combo(h, I, h, Y)),
        ("pi_z", combo(h, I, h, Z)),
        ("pi_yz", combo(h, Y, hi, Z)),
        ("pi_zx", combo(h, Z, hi, X)),
        ("pi_xy", combo(h, X, hi, Y)),
    ];
    ops.into_iter()
        .enumerate()
        .map(|(i, (name, op))| BasisOperation::from_operator(i as u16 + 1, name, op))
        .collect()
}

/// Deterministic, nearly uniform axes on the unit sphere.
pub fn fibonacci_axes(count: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let rad = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [rad * phi.cos(), rad * phi.sin(), z]
        })
        .collect()
}

fn axis_sigma(n: [f64; 3]) -> CMatrix {
    Pauli::X.matrix().mapv(|z| z * n[0]) + Pauli::Y.matrix().mapv(|z| z * n[1]) + Pauli::Z.matrix().mapv(|z| z * n[2])
}

fn build_extras() -> Vec<BasisOperation> {
    let axes = fibonacci_axes(EXTRA_AXES);
    let mut out = Vec::new();
    let mut id = COMPLETE_BASIS_SIZE as u16 + 1;
    for (i, &n) in axes.iter().enumerate() {
        for theta in [PI / 3.0, 2.0 * PI / 3.0] {
            let (s, c) = (theta / 2.0).sin_cos();
            let u = Pauli::I.matrix().mapv(|z| z * c) + axis_sigma(n).mapv(|z| z * c64(0.0, -s));
            out.push(BasisOperation::from_operator(
                id,
                format!("rot_{i}_{:.0}deg", theta.to_degrees()),
                u,
            ));
            id += 1;
        }
    }
    for (i, &n) in axes.iter().enumerate() {
        let p = (Pauli::I.matrix() + axis_sigma(n)).mapv(|z| z * 0.5);
        out.push(BasisOperation::from_operator(id, format!("proj_{i}"), p));
        id += 1;
    }
    out
}

/// The sixteen complete basis operations, ids 1 to 16.
pub fn basis16_table() -> &'static [BasisOperation] {
    static TABLE: OnceLock<Vec<BasisOperation>> = OnceLock::new();
    TABLE.get_or_init(build_table)
}

/// Extra operations for over-complete decompositions, ids 17 and up.
pub fn overcomplete_extras() -> &'static [BasisOperation] {
    static EXTRAS: OnceLock<Vec<BasisOperation>> = OnceLock::new();
    EXTRAS.get_or_init(build_extras)
}

/// Looks up any catalog operation by id.
pub fn basis_operation(id: u16) -> Option<&'static BasisOperation> {
    let idx = usize::from(id).checked_sub(1)?;
    if idx < COMPLETE_BASIS_SIZE {
        basis16_table().get(idx)
    } else {
        overcomplete_extras().get(idx - COMPLETE_BASIS_SIZE)
    }
}

/// Identifies one operation of a (possibly two-qubit) recovery basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BasisLabel {
    Single(u16),
    Pair(u16, u16),
}

impl BasisLabel {
    pub fn arity(self) -> usize {
        match self {
            BasisLabel::Single(_) => 1,
            BasisLabel::Pair(..) => 2,
        }
    }

    pub fn is_identity(self) -> bool {
        match self {
            BasisLabel::Single(a) => a == IDENTITY_ID,
            BasisLabel::Pair(a, b) => a == IDENTITY_ID && b == IDENTITY_ID,
        }
    }

    pub fn ids(self) -> Vec<u16> {
        match self {
            BasisLabel::Single(a) => vec![a],
            BasisLabel::Pair(a, b) => vec![a, b],
        }
    }

    /// Operator on the label's support.
    pub fn operator(self) -> CMatrix {
        match self {
            BasisLabel::Single(a) => op(a).clone(),
            BasisLabel::Pair(a, b) => crate::linalg::kron(op(a), op(b)),
        }
    }

    pub fn ptm(self) -> RMatrix {
        match self {
            BasisLabel::Single(a) => ptm(a).clone(),
            BasisLabel::Pair(a, b) => crate::linalg::kron(ptm(a), ptm(b)),
        }
    }

    pub fn name(self) -> String {
        match self {
            BasisLabel::Single(a) => name(a),
            BasisLabel::Pair(a, b) => format!("{}(x){}", name(a), name(b)),
        }
    }
}

fn op(id: u16) -> &'static CMatrix {
    basis_operation(id).expect("known basis id").operator()
}

fn ptm(id: u16) -> &'static RMatrix {
    &basis_operation(id).expect("known basis id").ptm.matrix
}

fn name(id: u16) -> String {
    basis_operation(id)
        .map(|b| b.name.clone())
        .unwrap_or_else(|| format!("#{id}"))
}

/// All labels of the tensor-product basis on `arity` qubits built from the
/// given single-qubit ids, identity first.
pub fn labels_for(arity: usize, ids: &[u16]) -> Vec<BasisLabel> {
    match arity {
        1 => ids.iter().map(|&a| BasisLabel::Single(a)).collect(),
        _ => ids
            .iter()
            .flat_map(|&a| ids.iter().map(move |&b| BasisLabel::Pair(a, b)))
            .collect(),
    }
}

/// Ids 1 to 16.
pub fn complete_ids() -> Vec<u16> {
    (1..=COMPLETE_BASIS_SIZE as u16).collect()
}

/// Ids 1 to 16 followed by every over-complete extra.
pub fn overcomplete_ids() -> Vec<u16> {
    let extra = overcomplete_extras().len() as u16;
    (1..=COMPLETE_BASIS_SIZE as u16 + extra).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, solve, ONE, ZERO};
    use ndarray::{array, Array2};

    fn basis_columns() -> RMatrix {
        let mut m = RMatrix::zeros((16, 16));
        for (j, b) in basis16_table().iter().enumerate() {
            for (k, v) in b.ptm.matrix.iter().enumerate() {
                m[[k, j]] = *v;
            }
        }
        m
    }

    #[test]
    fn ids_and_trace_preservation() {
        let table = basis16_table();
        assert_eq!(table.len(), 16);
        for (i, b) in table.iter().enumerate() {
            assert_eq!(b.id as usize, i + 1);
            assert_eq!(b.trace_preserving, b.id <= 10, "id {}", b.id);
            assert_eq!(b.ptm.is_trace_preserving(1e-12), b.trace_preserving);
        }
    }

    #[test]
    fn known_entries() {
        let id = &basis16_table()[0].ptm.matrix;
        assert!(max_abs_diff(id, &crate::linalg::identity(4)) < 1e-15);
        let z = &basis16_table()[3].ptm.matrix;
        assert!(max_abs_diff(z, &Array2::from_diag(&array![1.0, -1.0, -1.0, 1.0])) < 1e-15);
        let px = &basis16_table()[10].ptm.matrix;
        let expected = array![
            [0.5, 0.5, 0.0, 0.0],
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0]
        ];
        assert!(max_abs_diff(px, &expected) < 1e-15);
    }

    #[test]
    fn pi_xy_is_lowering_operator() {
        let b = basis_operation(16).unwrap();
        let expected = array![[ZERO, ONE], [ZERO, ZERO]];
        assert!(max_abs_diff(b.operator(), &expected) < 1e-15);
    }

    #[test]
    fn table_is_linearly_independent() {
        let m = basis_columns();
        // Solving against the identity inverts the basis matrix.
        let inv = solve(&m, &crate::linalg::identity(16)).expect("nonsingular");
        assert!(inv.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn extras_are_catalogued() {
        let extras = overcomplete_extras();
        assert_eq!(extras.len(), 3 * EXTRA_AXES);
        for (i, b) in extras.iter().enumerate() {
            assert_eq!(usize::from(b.id), COMPLETE_BASIS_SIZE + 1 + i);
            assert_eq!(basis_operation(b.id).unwrap().id, b.id);
        }
        assert!(basis_operation(0).is_none());
        assert!(basis_operation(200).is_none());
    }

    #[test]
    fn fibonacci_axes_are_unit() {
        for a in fibonacci_axes(8) {
            let n: f64 = a.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn pair_label_ptm_is_kron() {
        let l = BasisLabel::Pair(4, 11);
        let expected = crate::linalg::kron(ptm(4), ptm(11));
        assert!(max_abs_diff(&l.ptm(), &expected) < 1e-15);
        assert_eq!(labels_for(2, &[1, 2]).len(), 4);
        assert!(labels_for(2, &[1, 2])[0].is_identity());
    }
}
