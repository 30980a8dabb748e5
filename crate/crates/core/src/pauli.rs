// Copyright 2026 The qemforge Authors
// SPDX-License-Identifier: Apache-2.0

//! Pauli strings, Pauli-transfer representations and local map application.
//!
//! Conventions used everywhere in the crate:
//!
//! * Pauli strings are indexed base 4 with `I = 0, X = 1, Y = 2, Z = 3`;
//!   qubit 0 is the most significant digit.
//! * Qubit 0 is the leftmost tensor factor, so it is also the most
//!   significant bit of a computational-basis index.
//! * A state vector has entries `ρ_k = Tr(P_k ρ)`, an observable row has
//!   entries `Q_k = Tr(Q P_k) / 2^n`, and a transfer matrix has entries
//!   `E_kj = Tr(P_k ℰ(P_j)) / 2^m`. With these, `Tr(Q ℰ(ρ)) = Q · E · ρ`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};

use crate::error::{invalid, QemError, Result};
use crate::linalg::{c64, dagger, hermitian_eigen, matmul, CMatrix, RMatrix, C64, ONE, ZERO};

const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(k: usize) -> Pauli {
        Self::ALL[k & 3]
    }

    pub fn matrix(self) -> CMatrix {
        match self {
            Pauli::I => ndarray::array![[ONE, ZERO], [ZERO, ONE]],
            Pauli::X => ndarray::array![[ZERO, ONE], [ONE, ZERO]],
            Pauli::Y => ndarray::array![[ZERO, c64(0.0, -1.0)], [c64(0.0, 1.0), ZERO]],
            Pauli::Z => ndarray::array![[ONE, ZERO], [ZERO, -ONE]],
        }
    }

    fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Bit masks describing how a Pauli string acts on computational states:
/// `P|y⟩ = phase · |y ⊕ flip⟩`, with `⟨x|P|x ⊕ flip⟩ = (−i)^{n_y} (−1)^{|x ∧ sign|}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PauliMasks {
    pub flip: usize,
    pub sign: usize,
    pub n_y: u32,
}

impl PauliMasks {
    /// Masks of the string with base-4 index `k` on `n` qubits.
    pub fn from_index(n: usize, k: usize) -> Self {
        let mut flip = 0;
        let mut sign = 0;
        let mut n_y = 0;
        for q in 0..n {
            let shift = n - 1 - q;
            let digit = (k >> (2 * shift)) & 3;
            let bit = 1 << shift;
            match digit {
                1 => flip |= bit,
                2 => {
                    flip |= bit;
                    sign |= bit;
                    n_y += 1;
                }
                3 => sign |= bit,
                _ => {}
            }
        }
        Self { flip, sign, n_y }
    }

    #[inline]
    fn base_phase(&self) -> C64 {
        match self.n_y % 4 {
            0 => c64(1.0, 0.0),
            1 => c64(0.0, -1.0),
            2 => c64(-1.0, 0.0),
            _ => c64(0.0, 1.0),
        }
    }

    /// `⟨x|P|x ⊕ flip⟩`.
    #[inline]
    pub fn element(&self, x: usize) -> C64 {
        let p = self.base_phase();
        if (x & self.sign).count_ones() % 2 == 1 {
            -p
        } else {
            p
        }
    }
}

/// A weighted Pauli string.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliString {
    pub labels: Vec<Pauli>,
    pub coefficient: f64,
}

impl PauliString {
    pub fn new(labels: Vec<Pauli>, coefficient: f64) -> Self {
        Self { labels, coefficient }
    }

    /// Identity on `n` qubits with a given label placed on chosen qubits.
    pub fn with_ops(n: usize, ops: &[(usize, Pauli)], coefficient: f64) -> Result<Self> {
        let mut labels = vec![Pauli::I; n];
        for &(q, p) in ops {
            if q >= n {
                return Err(QemError::InvalidSupport {
                    support: vec![q],
                    qubits: n,
                });
            }
            labels[q] = p;
        }
        Ok(Self::new(labels, coefficient))
    }

    pub fn num_qubits(&self) -> usize {
        self.labels.len()
    }

    /// Base-4 index with qubit 0 the most significant digit.
    pub fn index(&self) -> usize {
        self.labels.iter().fold(0, |acc, p| acc * 4 + p.index())
    }

    pub fn from_index(n: usize, k: usize, coefficient: f64) -> Self {
        let labels = (0..n).map(|q| Pauli::from_index(k >> (2 * (n - 1 - q)))).collect();
        Self::new(labels, coefficient)
    }

    pub fn masks(&self) -> PauliMasks {
        PauliMasks::from_index(self.num_qubits(), self.index())
    }

    /// Qubits on which the string acts nontrivially.
    pub fn support(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, p)| **p != Pauli::I)
            .map(|(q, _)| q)
            .collect()
    }

    /// Dense matrix including the coefficient.
    pub fn matrix(&self) -> CMatrix {
        let n = self.num_qubits();
        let d = 1usize << n;
        let masks = self.masks();
        let mut m = CMatrix::zeros((d, d));
        for x in 0..d {
            m[[x, x ^ masks.flip]] = masks.element(x) * self.coefficient;
        }
        m
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*", self.coefficient)?;
        for p in &self.labels {
            write!(f, "{}", p.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = QemError;

    fn from_str(s: &str) -> Result<Self> {
        let labels = s
            .chars()
            .map(|ch| match ch.to_ascii_uppercase() {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(invalid("pauli", format!("unknown label `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if labels.is_empty() {
            return Err(QemError::EmptyInput("pauli string"));
        }
        Ok(Self::new(labels, 1.0))
    }
}

fn qubits_for_dim(d: usize) -> Result<usize> {
    if d == 0 || !d.is_power_of_two() {
        return Err(invalid("dimension", format!("{d} is not a power of two")));
    }
    Ok(d.trailing_zeros() as usize)
}

/// `Tr(P_k a)` for every Pauli string, for a general square matrix.
pub fn pauli_traces(a: &CMatrix) -> Result<Array1<C64>> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(QemError::DimensionMismatch {
            expected: d,
            found: a.ncols(),
        });
    }
    let n = qubits_for_dim(d)?;
    let mut out = Array1::zeros(1 << (2 * n));
    for (k, slot) in out.iter_mut().enumerate() {
        let m = PauliMasks::from_index(n, k);
        let mut acc = ZERO;
        for x in 0..d {
            acc += m.element(x) * a[[x ^ m.flip, x]];
        }
        *slot = acc;
    }
    Ok(out)
}

/// Rebuilds `(1/2^n) Σ_k c_k P_k`.
pub fn from_pauli_traces(coeffs: &Array1<C64>, n: usize) -> CMatrix {
    let d = 1usize << n;
    let mut out = CMatrix::zeros((d, d));
    let inv = 1.0 / d as f64;
    for (k, &c) in coeffs.iter().enumerate() {
        if c == ZERO {
            continue;
        }
        let m = PauliMasks::from_index(n, k);
        let c = c * inv;
        for x in 0..d {
            out[[x, x ^ m.flip]] += m.element(x) * c;
        }
    }
    out
}

/// Real Pauli traces of a Hermitian matrix, without validation.
pub(crate) fn pauli_traces_real(a: &CMatrix, n: usize, out: &mut Array1<f64>) {
    let d = 1usize << n;
    for (k, slot) in out.iter_mut().enumerate() {
        let m = PauliMasks::from_index(n, k);
        let mut acc = 0.0;
        for x in 0..d {
            acc += (m.element(x) * a[[x ^ m.flip, x]]).re;
        }
        *slot = acc;
    }
}

/// Rebuilds a Hermitian matrix from real Pauli traces, without validation.
pub(crate) fn from_pauli_traces_real(v: &Array1<f64>, n: usize, out: &mut CMatrix) {
    let d = 1usize << n;
    out.fill(ZERO);
    let inv = 1.0 / d as f64;
    for (k, &c) in v.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let m = PauliMasks::from_index(n, k);
        let c = c * inv;
        for x in 0..d {
            out[[x, x ^ m.flip]] += m.element(x) * c;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorKind {
    State,
    Observable,
}

/// Real Pauli-basis representation of a state (column) or an observable (row).
#[derive(Debug, Clone, PartialEq)]
pub struct PauliVector {
    pub entries: Array1<f64>,
    pub kind: VectorKind,
}

impl PauliVector {
    pub fn num_qubits(&self) -> usize {
        (self.entries.len().trailing_zeros() / 2) as usize
    }

    /// Reconstructs the Hermitian matrix this vector represents.
    pub fn to_matrix(&self) -> CMatrix {
        let n = self.num_qubits();
        let d = 1usize << n;
        let scale = match self.kind {
            VectorKind::State => 1.0,
            VectorKind::Observable => d as f64,
        };
        let coeffs = self.entries.mapv(|v| c64(v * scale, 0.0));
        from_pauli_traces(&coeffs, n)
    }
}

/// Maps a Hermitian state or observable to its Pauli vector.
pub fn pauli_vectorize(m: &CMatrix, kind: VectorKind) -> Result<PauliVector> {
    let defect = crate::linalg::hermiticity_defect(m);
    if defect > HERMITIAN_TOL {
        return Err(QemError::NonHermitian { deviation: defect });
    }
    let d = m.nrows();
    let traces = pauli_traces(m)?;
    let scale = match kind {
        VectorKind::State => 1.0,
        VectorKind::Observable => 1.0 / d as f64,
    };
    Ok(PauliVector {
        entries: traces.mapv(|z| z.re * scale),
        kind,
    })
}

/// Real `4^m × 4^m` Pauli transfer matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    pub matrix: RMatrix,
    pub arity: usize,
}

impl TransferMatrix {
    pub fn new(matrix: RMatrix) -> Result<Self> {
        let dim = matrix.nrows();
        if matrix.ncols() != dim || dim == 0 || !dim.is_power_of_two() || dim.trailing_zeros() % 2 != 0 {
            return Err(invalid(
                "transfer matrix",
                format!("shape {:?} is not 4^m square", matrix.dim()),
            ));
        }
        let arity = (dim.trailing_zeros() / 2) as usize;
        Ok(Self { matrix, arity })
    }

    pub fn identity(arity: usize) -> Self {
        Self {
            matrix: crate::linalg::identity(1 << (2 * arity)),
            arity,
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &TransferMatrix) -> Result<TransferMatrix> {
        if self.arity != other.arity {
            return Err(QemError::DimensionMismatch {
                expected: self.arity,
                found: other.arity,
            });
        }
        Ok(TransferMatrix {
            matrix: matmul(&self.matrix, &other.matrix),
            arity: self.arity,
        })
    }

    /// Tensor product; `self` acts on the more significant qubits.
    pub fn tensor(&self, other: &TransferMatrix) -> TransferMatrix {
        TransferMatrix {
            matrix: crate::linalg::kron(&self.matrix, &other.matrix),
            arity: self.arity + other.arity,
        }
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        self.matrix
            .row(0)
            .iter()
            .enumerate()
            .all(|(j, &v)| (v - if j == 0 { 1.0 } else { 0.0 }).abs() <= tol)
    }
}

/// Operator-sum map `ρ ↦ Σ A ρ A†` acting on `support`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausMap {
    pub operators: Vec<CMatrix>,
    pub support: Vec<usize>,
}

impl KrausMap {
    pub fn new(operators: Vec<CMatrix>, support: Vec<usize>) -> Result<Self> {
        if operators.is_empty() {
            return Err(QemError::EmptyInput("kraus operators"));
        }
        if support.is_empty() {
            return Err(QemError::EmptyInput("support"));
        }
        check_distinct(&support)?;
        let d = 1usize << support.len();
        for op in &operators {
            if op.nrows() != d {
                return Err(QemError::DimensionMismatch {
                    expected: d,
                    found: op.nrows(),
                });
            }
            if op.ncols() != d {
                return Err(QemError::DimensionMismatch {
                    expected: d,
                    found: op.ncols(),
                });
            }
        }
        Ok(Self { operators, support })
    }

    /// Single-qubit map on qubit 0.
    pub fn single(operators: Vec<CMatrix>) -> Result<Self> {
        Self::new(operators, vec![0])
    }

    pub fn arity(&self) -> usize {
        self.support.len()
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        let d = 1usize << self.arity();
        let mut acc = CMatrix::zeros((d, d));
        for a in &self.operators {
            acc = acc + matmul(&dagger(a), a);
        }
        crate::linalg::max_abs_diff(&acc, &crate::linalg::identity(d)) <= tol
    }

    pub fn apply_local(&self, rho: &CMatrix) -> CMatrix {
        let d = rho.nrows();
        let mut out = CMatrix::zeros((d, d));
        for a in &self.operators {
            out = out + matmul(&matmul(a, rho), &dagger(a));
        }
        out
    }
}

fn check_distinct(support: &[usize]) -> Result<()> {
    for (i, a) in support.iter().enumerate() {
        if support[i + 1..].contains(a) {
            return Err(invalid("support", format!("duplicate qubit index {a} in {support:?}")));
        }
    }
    Ok(())
}

/// Pauli transfer matrix of an operator-sum map.
pub fn ptm_from_kraus(map: &KrausMap) -> Result<TransferMatrix> {
    let m = map.arity();
    let d = 1usize << m;
    let dim = d * d;
    let mut e = RMatrix::zeros((dim, dim));
    for j in 0..dim {
        let pj = PauliString::from_index(m, j, 1.0).matrix();
        let image = map.apply_local(&pj);
        let traces = pauli_traces(&image)?;
        for k in 0..dim {
            e[[k, j]] = traces[k].re / d as f64;
        }
    }
    TransferMatrix::new(e)
}

/// Pauli transfer matrix of a signed operator sum `ρ ↦ Σ s_i A_i ρ A_i†`.
pub fn ptm_from_signed_kraus(terms: &[(f64, CMatrix)], arity: usize) -> RMatrix {
    let d = 1usize << arity;
    let dim = d * d;
    let mut e = RMatrix::zeros((dim, dim));
    for j in 0..dim {
        let pj = PauliString::from_index(arity, j, 1.0).matrix();
        let mut image = CMatrix::zeros((d, d));
        for (s, a) in terms {
            image = image + matmul(&matmul(a, &pj), &dagger(a)).mapv(|z| z * *s);
        }
        let mut col = Array1::zeros(dim);
        pauli_traces_real(&image, arity, &mut col);
        for k in 0..dim {
            e[[k, j]] = col[k] / d as f64;
        }
    }
    e
}

/// `⟨⟨Q| E |ρ⟩⟩ = Tr(Q ℰ(ρ))`.
pub fn ptm_expectation(observable: &PauliVector, channel: &TransferMatrix, state: &PauliVector) -> Result<f64> {
    let dim = channel.matrix.nrows();
    for len in [observable.entries.len(), state.entries.len()] {
        if len != dim {
            return Err(QemError::DimensionMismatch {
                expected: dim,
                found: len,
            });
        }
    }
    Ok(observable.entries.dot(&channel.matrix.dot(&state.entries)))
}

/// Index bookkeeping for acting on a subset of tensor factors.
///
/// `offsets[a]` is the contribution of local index `a` to the full index and
/// `bases` enumerates every full index whose support digits are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportIndex {
    pub offsets: Vec<usize>,
    pub bases: Vec<usize>,
}

impl SupportIndex {
    /// `radix` is 2 for Hilbert-space indices and 4 for Pauli indices.
    pub fn new(n: usize, support: &[usize], radix: usize) -> Result<Self> {
        for &q in support {
            if q >= n {
                return Err(QemError::InvalidSupport {
                    support: support.to_vec(),
                    qubits: n,
                });
            }
        }
        check_distinct(support)?;
        let m = support.len();
        let place = |q: usize| radix.pow((n - 1 - q) as u32);
        let local = radix.pow(m as u32);
        let offsets = (0..local)
            .map(|a| {
                (0..m)
                    .map(|i| {
                        let digit = (a / radix.pow((m - 1 - i) as u32)) % radix;
                        digit * place(support[i])
                    })
                    .sum()
            })
            .collect();
        let rest: Vec<usize> = (0..n).filter(|q| !support.contains(q)).collect();
        let count = radix.pow(rest.len() as u32);
        let bases = (0..count)
            .map(|r| {
                rest.iter()
                    .enumerate()
                    .map(|(i, &q)| {
                        let digit = (r / radix.pow((rest.len() - 1 - i) as u32)) % radix;
                        digit * place(q)
                    })
                    .sum()
            })
            .collect();
        Ok(Self { offsets, bases })
    }
}

/// `(A ⊗ 1) ρ` for `A` on the indexed support.
pub fn apply_left(a: &CMatrix, idx: &SupportIndex, rho: &CMatrix) -> CMatrix {
    let d = rho.ncols();
    let local = idx.offsets.len();
    let mut out = CMatrix::zeros(rho.raw_dim());
    let src = rho.as_slice().expect("standard layout");
    let dst = out.as_slice_mut().expect("standard layout");
    for &base in &idx.bases {
        for r in 0..local {
            let row_out = (base + idx.offsets[r]) * d;
            for c in 0..local {
                let coef = a[[r, c]];
                if coef == ZERO {
                    continue;
                }
                let row_in = (base + idx.offsets[c]) * d;
                for col in 0..d {
                    dst[row_out + col] += coef * src[row_in + col];
                }
            }
        }
    }
    out
}

/// `ρ (B ⊗ 1)` for `B` on the indexed support.
pub fn apply_right(rho: &CMatrix, b: &CMatrix, idx: &SupportIndex) -> CMatrix {
    let d = rho.nrows();
    let local = idx.offsets.len();
    let mut out = CMatrix::zeros(rho.raw_dim());
    let src = rho.as_slice().expect("standard layout");
    let dst = out.as_slice_mut().expect("standard layout");
    for row in 0..d {
        let line = row * d;
        for &base in &idx.bases {
            for c_out in 0..local {
                let mut acc = ZERO;
                for c_in in 0..local {
                    let coef = b[[c_in, c_out]];
                    if coef != ZERO {
                        acc += src[line + base + idx.offsets[c_in]] * coef;
                    }
                }
                dst[line + base + idx.offsets[c_out]] = acc;
            }
        }
    }
    out
}

/// Adds `s · A ρ A†` into `out`, with `A` on the indexed support.
pub fn add_sandwich(s: f64, a: &CMatrix, idx: &SupportIndex, rho: &CMatrix, out: &mut CMatrix) {
    let d = rho.nrows();
    let local = idx.offsets.len();
    let src = rho.as_slice().expect("standard layout");
    let dst = out.as_slice_mut().expect("standard layout");
    let mut block_in = vec![ZERO; local * local];
    let mut tmp = vec![ZERO; local * local];
    for &rb in &idx.bases {
        for &cb in &idx.bases {
            for i in 0..local {
                for j in 0..local {
                    block_in[i * local + j] = src[(rb + idx.offsets[i]) * d + cb + idx.offsets[j]];
                }
            }
            // tmp = A · block
            for i in 0..local {
                for j in 0..local {
                    let mut acc = ZERO;
                    for k in 0..local {
                        acc += a[[i, k]] * block_in[k * local + j];
                    }
                    tmp[i * local + j] = acc;
                }
            }
            // out += s · tmp · A†
            for i in 0..local {
                for j in 0..local {
                    let mut acc = ZERO;
                    for k in 0..local {
                        acc += tmp[i * local + k] * a[[j, k]].conj();
                    }
                    dst[(rb + idx.offsets[i]) * d + cb + idx.offsets[j]] += acc * s;
                }
            }
        }
    }
}

/// Applies a local transfer matrix to a full-system Pauli vector in place.
pub fn apply_ptm_local(e: &RMatrix, idx: &SupportIndex, v: &mut Array1<f64>, scratch: &mut Vec<f64>) {
    let local = idx.offsets.len();
    scratch.resize(2 * local, 0.0);
    let (gather, result) = scratch.split_at_mut(local);
    let data = v.as_slice_mut().expect("contiguous");
    for &base in &idx.bases {
        for j in 0..local {
            gather[j] = data[base + idx.offsets[j]];
        }
        for k in 0..local {
            let mut acc = 0.0;
            for j in 0..local {
                acc += e[[k, j]] * gather[j];
            }
            result[k] = acc;
        }
        for k in 0..local {
            data[base + idx.offsets[k]] = result[k];
        }
    }
}

/// A local map to be embedded into a larger register.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalMap {
    Kraus(KrausMap),
    Transfer { ptm: TransferMatrix, support: Vec<usize> },
}

/// Signed operator-sum form of an arbitrary Hermiticity-preserving map given
/// by its transfer matrix, obtained from the eigen-decomposition of its Choi
/// matrix. Terms with negligible weight are dropped.
pub fn signed_kraus_from_ptm(ptm: &TransferMatrix) -> Vec<(f64, CMatrix)> {
    let m = ptm.arity;
    let d = 1usize << m;
    let mut choi = CMatrix::zeros((d * d, d * d));
    for a in 0..d {
        for b in 0..d {
            let mut unit = CMatrix::zeros((d, d));
            unit[[a, b]] = ONE;
            let coeffs = pauli_traces(&unit).expect("square");
            let mapped: Array1<C64> = ptm.matrix.mapv(|v| c64(v, 0.0)).dot(&coeffs);
            let image = from_pauli_traces(&mapped, m);
            for c in 0..d {
                for c2 in 0..d {
                    choi[[a * d + c, b * d + c2]] = image[[c, c2]];
                }
            }
        }
    }
    let (vals, vecs) = hermitian_eigen(&choi);
    let scale = vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut terms = Vec::new();
    for (i, &mu) in vals.iter().enumerate() {
        if mu.abs() <= 1e-14 * scale.max(1e-300) {
            continue;
        }
        let k = CMatrix::from_shape_fn((d, d), |(c, a)| vecs[[a * d + c, i]]);
        terms.push((mu, k));
    }
    terms
}

/// A local map prepared for repeated application on an `n`-qubit register,
/// in both density-matrix and Pauli-vector form.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedMap {
    pub support: Vec<usize>,
    pub terms: Vec<(f64, CMatrix)>,
    pub ptm: RMatrix,
    pub num_qubits: usize,
    hilbert: SupportIndex,
    pauli: SupportIndex,
}

impl EmbeddedMap {
    pub fn from_signed_kraus(terms: Vec<(f64, CMatrix)>, support: Vec<usize>, n: usize) -> Result<Self> {
        let hilbert = SupportIndex::new(n, &support, 2)?;
        let pauli = SupportIndex::new(n, &support, 4)?;
        let d = 1usize << support.len();
        for (_, a) in &terms {
            if a.nrows() != d || a.ncols() != d {
                return Err(QemError::DimensionMismatch {
                    expected: d,
                    found: a.nrows(),
                });
            }
        }
        let ptm = ptm_from_signed_kraus(&terms, support.len());
        Ok(Self {
            support,
            terms,
            ptm,
            num_qubits: n,
            hilbert,
            pauli,
        })
    }

    /// Applies the map to a density matrix.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(rho.raw_dim());
        for (s, a) in &self.terms {
            add_sandwich(*s, a, &self.hilbert, rho, &mut out);
        }
        out
    }

    /// Adds `scale · ℰ(ρ)` into `out`.
    pub fn add_apply(&self, scale: f64, rho: &CMatrix, out: &mut CMatrix) {
        for (s, a) in &self.terms {
            add_sandwich(scale * s, a, &self.hilbert, rho, out);
        }
    }

    /// Applies the map to a full-system Pauli state vector in place.
    pub fn apply_pauli(&self, v: &mut Array1<f64>, scratch: &mut Vec<f64>) {
        apply_ptm_local(&self.ptm, &self.pauli, v, scratch);
    }

    pub fn transfer_matrix(&self) -> TransferMatrix {
        TransferMatrix {
            matrix: self.ptm.clone(),
            arity: self.support.len(),
        }
    }
}

/// Embeds a local map into an `n`-qubit register.
pub fn embed_local(map: &LocalMap, n: usize) -> Result<EmbeddedMap> {
    match map {
        LocalMap::Kraus(k) => EmbeddedMap::from_signed_kraus(
            k.operators.iter().map(|a| (1.0, a.clone())).collect(),
            k.support.clone(),
            n,
        ),
        LocalMap::Transfer { ptm, support } => {
            if ptm.arity != support.len() {
                return Err(QemError::DimensionMismatch {
                    expected: ptm.arity,
                    found: support.len(),
                });
            }
            let mut embedded = EmbeddedMap::from_signed_kraus(signed_kraus_from_ptm(ptm), support.clone(), n)?;
            embedded.ptm = ptm.matrix.clone();
            Ok(embedded)
        }
    }
}

/// Dense full-register matrix of a local operator; used by tests and small
/// generators.
pub fn embed_operator(a: &CMatrix, support: &[usize], n: usize) -> Result<CMatrix> {
    let idx = SupportIndex::new(n, support, 2)?;
    let d = 1usize << n;
    Ok(apply_left(a, &idx, &crate::linalg::identity::<C64>(d)))
}

/// Dense `4^n × 4^n` transfer matrix of a local transfer matrix embedded in
/// an `n`-qubit register. Only for small `n` (tests and oracles).
pub fn embed_transfer_matrix(local: &RMatrix, support: &[usize], n: usize) -> Result<RMatrix> {
    let idx = SupportIndex::new(n, support, 4)?;
    let dim = 1usize << (2 * n);
    let mut out = RMatrix::zeros((dim, dim));
    let mut scratch = Vec::new();
    for j in 0..dim {
        let mut col = Array1::zeros(dim);
        col[j] = 1.0;
        apply_ptm_local(local, &idx, &mut col, &mut scratch);
        out.column_mut(j).assign(&col);
    }
    Ok(out)
}

/// Transfer matrix of the local Pauli channel `(1 − Σp)𝓘 + p_x𝓧 + p_y𝓨 + p_z𝓩`.
pub fn pauli_channel_ptm(px: f64, py: f64, pz: f64) -> RMatrix {
    let p0 = 1.0 - px - py - pz;
    Array2::from_diag(&ndarray::array![
        1.0,
        p0 + px - py - pz,
        p0 - px + py - pz,
        p0 - px - py + pz
    ])
}
