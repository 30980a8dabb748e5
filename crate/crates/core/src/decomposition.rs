// Copyright 2026 The qemforge Authors
// SPDX-License-Identifier: Apache-2.0

//! Recovery generators and their quasi-probability decompositions.
//!
//! The recovery map for one step is `ℰ_Q = I + G_Q δt`, where `G_Q` cancels
//! the estimated noise generator to first order. `G_Q` is written as
//! `q₀·I + Σ_j q_j B_j` over implementable basis operations `B_j`; the cost
//! rate of that representation is `C1 = q₀ + Σ_j |q_j|`.

use std::collections::HashMap;
use std::sync::OnceLock;

use ndarray::Array1;

use crate::basis::{complete_ids, labels_for, BasisLabel};
use crate::error::{invalid, QemError, Result};
use crate::linalg::{identity, matmul, max_abs_diff, solve, RMatrix, RVector};
use crate::lindblad::{Convention, NoiseModel, TimeProfile};
use crate::pauli::{pauli_traces, PauliString};

const COEFF_CUTOFF: f64 = 1e-13;
const LP_TOL: f64 = 1e-9;

/// Where a recovery generator came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorSource {
    FromNoiseModel,
    Explicit,
}

/// The recovery generator restricted to one subsystem, multiplied by `g(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryTerm {
    pub support: Vec<usize>,
    pub profile: TimeProfile,
    /// Real `4^m × 4^m` transfer matrix, in 1/µs.
    pub generator: RMatrix,
}

impl RecoveryTerm {
    pub fn arity(&self) -> usize {
        self.support.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryGenerator {
    pub num_qubits: usize,
    pub terms: Vec<RecoveryTerm>,
    pub source: GeneratorSource,
}

impl RecoveryGenerator {
    /// A generator given directly as local transfer matrices.
    pub fn explicit(num_qubits: usize, terms: Vec<RecoveryTerm>) -> Result<Self> {
        for t in &terms {
            check_support(num_qubits, &t.support)?;
            let dim = 1usize << (2 * t.arity());
            if t.generator.dim() != (dim, dim) {
                return Err(QemError::DimensionMismatch {
                    expected: dim,
                    found: t.generator.nrows(),
                });
            }
        }
        Ok(Self {
            num_qubits,
            terms,
            source: GeneratorSource::Explicit,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.generator.iter().all(|v| *v == 0.0))
    }

    /// Dense full-register transfer matrix at time `t`. Small `n` only.
    pub fn full_matrix(&self, t: f64) -> Result<RMatrix> {
        let dim = 1usize << (2 * self.num_qubits);
        let mut out = RMatrix::zeros((dim, dim));
        for term in &self.terms {
            let g = term.profile.value(t);
            if g == 0.0 {
                continue;
            }
            let full = crate::pauli::embed_transfer_matrix(&term.generator, &term.support, self.num_qubits)?;
            out.scaled_add(g, &full);
        }
        Ok(out)
    }
}

fn check_support(n: usize, support: &[usize]) -> Result<()> {
    if support.is_empty() {
        return Err(QemError::EmptyInput("recovery support"));
    }
    if support.len() > 2 {
        return Err(QemError::NonLocalTerm { arity: support.len() });
    }
    if support.iter().any(|&q| q >= n) || (support.len() == 2 && support[0] == support[1]) {
        return Err(QemError::InvalidSupport {
            support: support.to_vec(),
            qubits: n,
        });
    }
    Ok(())
}

/// Transfer matrix of a local superoperator given as a closure on matrices.
fn local_ptm(arity: usize, f: impl Fn(&crate::linalg::CMatrix) -> crate::linalg::CMatrix) -> RMatrix {
    let d = 1usize << arity;
    let dim = d * d;
    let mut e = RMatrix::zeros((dim, dim));
    for j in 0..dim {
        let pj = PauliString::from_index(arity, j, 1.0).matrix();
        let traces = pauli_traces(&f(&pj)).expect("square");
        for k in 0..dim {
            e[[k, j]] = traces[k].re / d as f64;
        }
    }
    e
}

/// Reorders the qubits of a two-qubit transfer matrix.
fn swap_qubits(e: &RMatrix) -> RMatrix {
    let sw = |k: usize| ((k & 3) << 2) | (k >> 2);
    RMatrix::from_shape_fn(e.raw_dim(), |(k, j)| e[[sw(k), sw(j)]])
}

/// Builds `G_Q = −PTM(c·𝒟) − PTM(−i[δH, ·])`, one term per support and
/// profile, where `c` is the dissipator normalization of `convention`.
pub fn recovery_generator(noise: &NoiseModel, convention: Convention) -> Result<RecoveryGenerator> {
    let n = noise.num_qubits;
    let mut terms: Vec<RecoveryTerm> = Vec::new();
    let mut push = |support: Vec<usize>, profile: TimeProfile, g: RMatrix| -> Result<()> {
        check_support(n, &support)?;
        let found = terms.iter_mut().find(|t| {
            t.profile == profile && t.support.len() == support.len() && support.iter().all(|q| t.support.contains(q))
        });
        match found {
            Some(t) => {
                let g = if t.support == support { g } else { swap_qubits(&g) };
                t.generator = &t.generator + &g;
            }
            None => terms.push(RecoveryTerm {
                support,
                profile,
                generator: g,
            }),
        }
        Ok(())
    };
    for term in &noise.terms {
        if term.rate == 0.0 {
            continue;
        }
        let weight = convention.factor();
        let g = local_ptm(term.support.len(), |x| term.apply_local(x)).mapv(|v| -weight * v);
        push(term.support.clone(), term.profile, g)?;
    }
    if let Some(h) = &noise.coherent {
        // profile(t/r)/r equals scale · profile(t) for both profiles
        let scale = h.multiplier(1.0);
        for p in &h.terms {
            if p.coefficient == 0.0 {
                continue;
            }
            let support = p.support();
            if support.is_empty() {
                continue;
            }
            let local =
                PauliString::new(support.iter().map(|&q| p.labels[q]).collect(), p.coefficient * scale).matrix();
            // −(−i[δH, x]) = i(δH x − x δH)
            let g = local_ptm(support.len(), |x| {
                (matmul(&local, x) - matmul(x, &local)).mapv(|z| z * crate::linalg::I)
            });
            push(support, h.profile, g)?;
        }
    }
    Ok(RecoveryGenerator {
        num_qubits: n,
        terms,
        source: GeneratorSource::FromNoiseModel,
    })
}

/// `G_Q = q₀·I + Σ_j q_j B_j` on one subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiDecomposition {
    pub support: Vec<usize>,
    pub profile: TimeProfile,
    pub q0: f64,
    /// Non-identity labels with nonzero coefficients, in basis order.
    pub terms: Vec<(BasisLabel, f64)>,
    /// `q₀ + Σ|q_j|`, 1/µs.
    pub c1: f64,
    /// `Σ|q_j|`, 1/µs.
    pub gamma: f64,
    /// `s_j`, cumulative jump-selection distribution; empty when `Γ = 0`.
    pub cumulative: Vec<f64>,
}

impl QuasiDecomposition {
    pub fn new(support: Vec<usize>, profile: TimeProfile, q0: f64, terms: Vec<(BasisLabel, f64)>) -> Self {
        let terms: Vec<_> = terms
            .into_iter()
            .filter(|(l, q)| *q != 0.0 && !l.is_identity())
            .collect();
        let gamma = terms.iter().map(|(_, q)| q.abs()).sum::<f64>();
        let mut cumulative = Vec::with_capacity(terms.len());
        let mut acc = 0.0;
        for (_, q) in &terms {
            acc += q.abs();
            cumulative.push(acc / gamma);
        }
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Self {
            support,
            profile,
            q0,
            c1: q0 + gamma,
            gamma,
            terms,
            cumulative,
        }
    }

    pub fn arity(&self) -> usize {
        self.support.len()
    }

    /// `α_j = sign(q_j)`.
    pub fn alpha(&self, j: usize) -> f64 {
        self.terms[j].1.signum()
    }

    pub fn coefficient(&self, label: BasisLabel) -> f64 {
        if label.is_identity() {
            return self.q0;
        }
        self.terms.iter().find(|(l, _)| *l == label).map_or(0.0, |(_, q)| *q)
    }

    /// `q₀·I + Σ q_j B_j` as a transfer matrix.
    pub fn reconstruct(&self) -> RMatrix {
        let dim = 1usize << (2 * self.arity());
        let mut out = identity::<f64>(dim).mapv(|v| v * self.q0);
        for (label, q) in &self.terms {
            out.scaled_add(*q, &label.ptm());
        }
        out
    }

    /// Largest entry of `|reconstruction − G|`.
    pub fn residual(&self, generator: &RMatrix) -> f64 {
        max_abs_diff(&self.reconstruct(), generator)
    }

    /// Index of the term selected by `u ∈ [0, 1]` through half-open bins
    /// `[s_{j−1}, s_j)`; `u = 1` selects the last bin.
    pub fn select(&self, u: f64) -> Option<usize> {
        if self.cumulative.is_empty() {
            return None;
        }
        let j = self.cumulative.partition_point(|&s| s <= u);
        Some(j.min(self.cumulative.len() - 1))
    }
}

fn flatten(m: &RMatrix) -> impl Iterator<Item = f64> + '_ {
    m.iter().copied()
}

fn basis_columns(labels: &[BasisLabel]) -> RMatrix {
    let rows = labels[0].ptm().len();
    let mut a = RMatrix::zeros((rows, labels.len()));
    for (j, l) in labels.iter().enumerate() {
        for (i, v) in flatten(&l.ptm()).enumerate() {
            a[[i, j]] = v;
        }
    }
    a
}

/// Cached inverse of the complete tensor-product basis matrix.
fn complete_inverse(arity: usize) -> &'static (Vec<BasisLabel>, RMatrix) {
    static ONE: OnceLock<(Vec<BasisLabel>, RMatrix)> = OnceLock::new();
    static TWO: OnceLock<(Vec<BasisLabel>, RMatrix)> = OnceLock::new();
    let build = move || {
        let labels = labels_for(arity, &complete_ids());
        let a = basis_columns(&labels);
        let inv = solve(&a, &identity::<f64>(a.nrows())).expect("complete basis is invertible");
        (labels, inv)
    };
    match arity {
        1 => ONE.get_or_init(build),
        _ => TWO.get_or_init(build),
    }
}

fn coefficient_scale(g: &RMatrix) -> f64 {
    g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

fn from_coefficients(term: &RecoveryTerm, labels: &[BasisLabel], q: &[f64]) -> QuasiDecomposition {
    let cut = COEFF_CUTOFF * coefficient_scale(&term.generator);
    let mut q0 = 0.0;
    let mut terms = Vec::new();
    for (l, &v) in labels.iter().zip(q) {
        if l.is_identity() {
            q0 += v;
        } else if v.abs() > cut {
            terms.push((*l, v));
        }
    }
    QuasiDecomposition::new(term.support.clone(), term.profile, q0, terms)
}

/// Exact solve over the complete 16- or 256-element basis.
pub fn decompose_minimal(term: &RecoveryTerm) -> Result<QuasiDecomposition> {
    if term.arity() == 0 || term.arity() > 2 {
        return Err(QemError::NonLocalTerm { arity: term.arity() });
    }
    let (labels, inv) = complete_inverse(term.arity());
    let b: RVector = flatten(&term.generator).collect();
    let q = inv.dot(&b);
    Ok(from_coefficients(term, labels, q.as_slice().expect("contiguous")))
}

/// Decomposes every term of a generator with the minimal solve.
pub fn decompose_all_minimal(gen: &RecoveryGenerator) -> Result<Vec<QuasiDecomposition>> {
    gen.terms.iter().map(decompose_minimal).collect()
}

/// Minimizes `C1` over the complete basis extended by `extra_ids` (catalog
/// ids above 16) with a simplex method.
pub fn decompose_lp(term: &RecoveryTerm, extra_ids: &[u16]) -> Result<QuasiDecomposition> {
    if term.arity() == 0 || term.arity() > 2 {
        return Err(QemError::NonLocalTerm { arity: term.arity() });
    }
    let mut ids = complete_ids();
    for &id in extra_ids {
        if crate::basis::basis_operation(id).is_none() {
            return Err(invalid("extra basis", format!("unknown id {id}")));
        }
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    let labels = labels_for(term.arity(), &ids);
    let basis = basis_columns(&labels);
    let rows = basis.nrows();
    let k = labels.len();
    // x = [q⁺ ; q⁻]
    let mut a = RMatrix::zeros((rows, 2 * k));
    let mut c = RVector::zeros(2 * k);
    for j in 0..k {
        for i in 0..rows {
            a[[i, j]] = basis[[i, j]];
            a[[i, k + j]] = -basis[[i, j]];
        }
        if labels[j].is_identity() {
            c[j] = 1.0;
            c[k + j] = -1.0;
        } else {
            c[j] = 1.0;
            c[k + j] = 1.0;
        }
    }
    let b: RVector = flatten(&term.generator).collect();
    let x = simplex_minimize(&a, &b, &c)?;
    let q: Vec<f64> = (0..k).map(|j| x[j] - x[k + j]).collect();
    Ok(from_coefficients(term, &labels, &q))
}

/// Solves `min c·x` subject to `A x = b`, `x ≥ 0` with a two-phase dense
/// tableau simplex using Bland's rule. The basic solution found is refined
/// by a least-squares solve over its basic columns.
pub fn simplex_minimize(a: &RMatrix, b: &RVector, c: &RVector) -> Result<RVector> {
    let (m, n) = a.dim();
    if b.len() != m {
        return Err(QemError::DimensionMismatch {
            expected: m,
            found: b.len(),
        });
    }
    if c.len() != n {
        return Err(QemError::DimensionMismatch {
            expected: n,
            found: c.len(),
        });
    }
    let width = n + m + 1;
    let rhs = width - 1;
    let mut t = RMatrix::zeros((m + 1, width));
    for i in 0..m {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[[i, j]] = s * a[[i, j]];
        }
        t[[i, n + i]] = 1.0;
        t[[i, rhs]] = s * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let scale = 1.0 + b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));

    // phase 1: minimize the sum of artificials
    for j in 0..n {
        t[[m, j]] = -(0..m).map(|i| t[[i, j]]).sum::<f64>();
    }
    t[[m, rhs]] = -(0..m).map(|i| t[[i, rhs]]).sum::<f64>();
    run_simplex(&mut t, &mut basis, n + m, m)?;
    if -t[[m, rhs]] > LP_TOL * scale {
        return Err(QemError::Infeasible);
    }

    // drive remaining artificials out of the basis; drop redundant rows
    let mut active: Vec<bool> = vec![true; m];
    for i in 0..m {
        if basis[i] < n {
            continue;
        }
        match (0..n).find(|&j| t[[i, j]].abs() > LP_TOL) {
            Some(j) => pivot(&mut t, &mut basis, i, j),
            None => active[i] = false,
        }
    }

    // phase 2
    for j in 0..width {
        t[[m, j]] = 0.0;
    }
    for j in 0..n {
        t[[m, j]] = c[j];
    }
    for i in 0..m {
        if !active[i] {
            continue;
        }
        let cb = c[basis[i]];
        if cb != 0.0 {
            for j in 0..width {
                let v = t[[i, j]];
                t[[m, j]] -= cb * v;
            }
        }
    }
    for i in 0..m {
        if !active[i] {
            for j in 0..width {
                t[[i, j]] = 0.0;
            }
        }
    }
    run_simplex(&mut t, &mut basis, n, m)?;

    let mut x = RVector::zeros(n);
    let cols: Vec<usize> = (0..m)
        .filter(|&i| active[i] && basis[i] < n)
        .map(|i| basis[i])
        .collect();
    for i in 0..m {
        if active[i] && basis[i] < n {
            x[basis[i]] = t[[i, rhs]].max(0.0);
        }
    }
    if let Some(refined) = refine(a, b, &cols) {
        let before = residual_norm(a, b, &x);
        let mut candidate = RVector::zeros(n);
        for (&j, &v) in cols.iter().zip(refined.iter()) {
            candidate[j] = v;
        }
        if residual_norm(a, b, &candidate) < before && candidate.iter().all(|&v| v >= -LP_TOL) {
            x = candidate.mapv(|v| v.max(0.0));
        }
    }
    Ok(x)
}

fn residual_norm(a: &RMatrix, b: &RVector, x: &RVector) -> f64 {
    (a.dot(x) - b).iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Least-squares solution restricted to the given columns.
fn refine(a: &RMatrix, b: &RVector, cols: &[usize]) -> Option<Array1<f64>> {
    if cols.is_empty() {
        return None;
    }
    let k = cols.len();
    let ab = RMatrix::from_shape_fn((a.nrows(), k), |(i, j)| a[[i, cols[j]]]);
    let normal = ab.t().dot(&ab);
    let rhs = ab.t().dot(b).insert_axis(ndarray::Axis(1));
    let sol = solve(&normal, &rhs.to_owned()).ok()?;
    Some(sol.column(0).to_owned())
}

fn pivot(t: &mut RMatrix, basis: &mut [usize], row: usize, col: usize) {
    let width = t.ncols();
    let p = t[[row, col]];
    for j in 0..width {
        t[[row, j]] /= p;
    }
    let pivot_row = t.row(row).to_owned();
    for i in 0..t.nrows() {
        if i == row {
            continue;
        }
        let f = t[[i, col]];
        if f != 0.0 {
            for j in 0..width {
                t[[i, j]] -= f * pivot_row[j];
            }
        }
    }
    basis[row] = col;
}

/// Primal simplex iterations on a tableau whose last row holds reduced
/// costs; only the first `allowed` columns may enter.
fn run_simplex(t: &mut RMatrix, basis: &mut [usize], allowed: usize, m: usize) -> Result<()> {
    let rhs = t.ncols() - 1;
    let max_iter = 50 * (t.ncols() + m);
    for _ in 0..max_iter {
        let Some(col) = (0..allowed).find(|&j| t[[m, j]] < -LP_TOL) else {
            return Ok(());
        };
        let mut best: Option<(f64, usize)> = None;
        for i in 0..m {
            let v = t[[i, col]];
            if v > LP_TOL {
                let ratio = t[[i, rhs]] / v;
                best = match best {
                    None => Some((ratio, i)),
                    Some((r, bi)) => {
                        if ratio < r - 1e-12 || (ratio <= r + 1e-12 && basis[i] < basis[bi]) {
                            Some((ratio, i))
                        } else {
                            Some((r, bi))
                        }
                    }
                };
            }
        }
        let Some((_, row)) = best else {
            return Err(QemError::Unbounded);
        };
        pivot(t, basis, row, col);
    }
    Err(invalid("simplex", "iteration limit reached"))
}

/// Sampling quantities of one decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingTable {
    pub gamma: f64,
    /// Upper bin edges `s_j`.
    pub bins: Vec<f64>,
    pub labels: Vec<BasisLabel>,
    pub alpha: Vec<f64>,
    pub c1: f64,
}

impl SamplingTable {
    /// Per-step overhead factor `1 + C1 δt`.
    pub fn step_factor(&self, dt: f64) -> f64 {
        1.0 + self.c1 * dt
    }
}

pub fn sampling_tables(decomp: &QuasiDecomposition) -> SamplingTable {
    SamplingTable {
        gamma: decomp.gamma,
        bins: decomp.cumulative.clone(),
        labels: decomp.terms.iter().map(|(l, _)| *l).collect(),
        alpha: decomp.terms.iter().map(|(_, q)| q.signum()).collect(),
        c1: decomp.c1,
    }
}

/// Sampling cost of a set of decompositions over a run of length `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    /// `Σ C1` over subsystems, 1/µs (profile multipliers excluded).
    pub c1_total: f64,
    /// `ln C = Σ ∫₀ᵀ C1 g dt`.
    pub log_c: f64,
    pub c: f64,
    pub c2: f64,
    /// Total noise strength `N·T·Σ rates`.
    pub lambda: f64,
    /// Expected jump count `∫₀ᵀ Γ_total dt`.
    pub mean_jumps: f64,
}

/// `rate_sum` is the sum of physical rates per qubit used for `Λ`.
pub fn cost_overhead(decomps: &[QuasiDecomposition], t: f64, num_qubits: usize, rate_sum: f64) -> Result<CostReport> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("T", format!("must be finite and nonnegative, got {t}")));
    }
    let mut log_c = 0.0;
    let mut jumps = 0.0;
    let mut c1_total = 0.0;
    for d in decomps {
        let w = d.profile.integral(0.0, t);
        log_c += d.c1 * w;
        jumps += d.gamma * w;
        c1_total += d.c1;
    }
    Ok(CostReport {
        c1_total,
        log_c,
        c: log_c.exp(),
        c2: (2.0 * log_c).exp(),
        lambda: num_qubits as f64 * t * rate_sum,
        mean_jumps: jumps,
    })
}

/// Closed-form recovery decompositions for single-qubit noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnalyticNoise {
    /// `L = σz`.
    Dephasing,
    /// Three Pauli jumps of rate `λ/4` each.
    Depolarizing,
    /// `L = σ₋`.
    AmplitudeDamping,
    /// Coherent error `δH = λσx`, e.g. drive crosstalk seen by a target.
    CoherentX,
    /// Coherent error `δH = λσz`, a Stark shift.
    CoherentZ,
}

/// The analytic decomposition of the recovery generator for noise of
/// strength `rate` on qubit 0.
pub fn analytic_decomposition(kind: AnalyticNoise, rate: f64) -> QuasiDecomposition {
    use BasisLabel::Single;
    // catalog ids: 2 σx, 3 σy, 4 σz, 5 R_x, 7 R_z, 13 π_z, 16 π_xy
    let (q0, terms) = match kind {
        AnalyticNoise::Dephasing => (rate, vec![(Single(4), -rate)]),
        AnalyticNoise::Depolarizing => (
            0.75 * rate,
            vec![
                (Single(2), -0.25 * rate),
                (Single(3), -0.25 * rate),
                (Single(4), -0.25 * rate),
            ],
        ),
        AnalyticNoise::AmplitudeDamping => (
            0.75 * rate,
            vec![(Single(4), 0.25 * rate), (Single(13), -rate), (Single(16), -rate)],
        ),
        AnalyticNoise::CoherentX => (-rate, vec![(Single(2), -rate), (Single(5), 2.0 * rate)]),
        AnalyticNoise::CoherentZ => (-rate, vec![(Single(4), -rate), (Single(7), 2.0 * rate)]),
    };
    QuasiDecomposition::new(vec![0], TimeProfile::Constant, q0, terms)
}

/// Signed Pauli mixture inverting single-qubit depolarizing noise of
/// probability `p`: `𝒟⁻¹ = C[p₁𝓘 − p₂(𝓧 + 𝓨 + 𝓩)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepolarizingInverse {
    pub p: f64,
    pub c: f64,
    pub p1: f64,
    pub p2: f64,
    /// Signed weights including `C`, identity first.
    pub terms: Vec<(BasisLabel, f64)>,
}

impl DepolarizingInverse {
    pub fn transfer_matrix(&self) -> RMatrix {
        let mut out = RMatrix::zeros((4, 4));
        for (l, w) in &self.terms {
            out.scaled_add(*w, &l.ptm());
        }
        out
    }
}

pub fn invert_depolarizing(p: f64) -> Result<DepolarizingInverse> {
    if !(0.0..1.0).contains(&p) {
        return Err(invalid("p", format!("must lie in [0, 1), got {p}")));
    }
    let c = (p + 2.0) / (2.0 - 2.0 * p);
    let p1 = (4.0 - p) / (2.0 * p + 4.0);
    let p2 = p / (2.0 * p + 4.0);
    let terms = vec![
        (BasisLabel::Single(1), c * p1),
        (BasisLabel::Single(2), -c * p2),
        (BasisLabel::Single(3), -c * p2),
        (BasisLabel::Single(4), -c * p2),
    ];
    Ok(DepolarizingInverse { p, c, p1, p2, terms })
}

/// Transfer matrix of `ρ ↦ (1 − 3p/4)ρ + (p/4)(XρX + YρY + ZρZ)`.
pub fn depolarizing_ptm(p: f64) -> RMatrix {
    let s = 1.0 - p;
    RMatrix::from_diag(&ndarray::array![1.0, s, s, s])
}

/// Groups decompositions by support for lookup during sampling.
pub fn by_support(decomps: &[QuasiDecomposition]) -> HashMap<Vec<usize>, Vec<usize>> {
    let mut out: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for (i, d) in decomps.iter().enumerate() {
        out.entry(d.support.clone()).or_default().push(i);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::overcomplete_extras;
    use crate::lindblad::{Generator, HamiltonianSpec, LindbladTerm};
    use crate::pauli::Pauli;
    use approx::assert_abs_diff_eq;

    fn single(noise: Vec<LindbladTerm>) -> RecoveryTerm {
        let model = NoiseModel::new(1, noise).unwrap();
        recovery_generator(&model, Convention::Gksl).unwrap().terms.remove(0)
    }

    fn extra_ids() -> Vec<u16> {
        overcomplete_extras().iter().map(|b| b.id).collect()
    }

    #[test]
    fn dephasing_generator_and_decomposition() {
        let lam = 0.3;
        let term = single(vec![LindbladTerm::dephasing(0, lam)]);
        let expected = RMatrix::from_diag(&ndarray::array![0.0, 2.0 * lam, 2.0 * lam, 0.0]);
        assert!(max_abs_diff(&term.generator, &expected) < 1e-14);
        let d = decompose_minimal(&term).unwrap();
        assert_abs_diff_eq!(d.q0, lam, epsilon = 1e-14);
        assert_eq!(d.terms.len(), 1);
        assert_eq!(d.terms[0].0, BasisLabel::Single(4));
        assert_abs_diff_eq!(d.terms[0].1, -lam, epsilon = 1e-14);
        assert_abs_diff_eq!(d.c1, 2.0 * lam, epsilon = 1e-14);
        assert_abs_diff_eq!(d.gamma, lam, epsilon = 1e-14);
        assert_eq!(d.alpha(0), -1.0);
    }

    #[test]
    fn analytic_catalog_matches_linear_solve() {
        let lam = 0.17;
        let cases: Vec<(AnalyticNoise, RecoveryTerm)> = vec![
            (AnalyticNoise::Dephasing, single(vec![LindbladTerm::dephasing(0, lam)])),
            (AnalyticNoise::Depolarizing, single(LindbladTerm::depolarizing(0, lam))),
            (
                AnalyticNoise::AmplitudeDamping,
                single(vec![LindbladTerm::amplitude_damping(0, lam)]),
            ),
        ];
        let mut cases = cases;
        for (kind, p) in [
            (AnalyticNoise::CoherentX, Pauli::X),
            (AnalyticNoise::CoherentZ, Pauli::Z),
        ] {
            let dh = HamiltonianSpec::new(1, vec![PauliString::new(vec![p], lam)]).unwrap();
            let model = NoiseModel::noiseless(1).with_coherent(dh).unwrap();
            cases.push((
                kind,
                recovery_generator(&model, Convention::Gksl).unwrap().terms.remove(0),
            ));
        }
        for (kind, term) in cases {
            let analytic = analytic_decomposition(kind, lam);
            assert!(analytic.residual(&term.generator) < 1e-13, "{kind:?}");
            let solved = decompose_minimal(&term).unwrap();
            assert_abs_diff_eq!(solved.c1, analytic.c1, epsilon = 1e-12);
            assert_abs_diff_eq!(solved.q0, analytic.q0, epsilon = 1e-12);
            for (l, q) in &analytic.terms {
                assert_abs_diff_eq!(solved.coefficient(*l), *q, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn catalog_costs() {
        let lam = 1.0;
        assert_abs_diff_eq!(analytic_decomposition(AnalyticNoise::Depolarizing, lam).c1, 1.5);
        assert_abs_diff_eq!(analytic_decomposition(AnalyticNoise::AmplitudeDamping, lam).c1, 3.0);
        assert_abs_diff_eq!(analytic_decomposition(AnalyticNoise::AmplitudeDamping, lam).gamma, 2.25);
        assert_abs_diff_eq!(analytic_decomposition(AnalyticNoise::CoherentX, lam).c1, 2.0);
        assert_abs_diff_eq!(analytic_decomposition(AnalyticNoise::CoherentX, lam).gamma, 3.0);
    }

    #[test]
    fn merged_relaxation_and_dephasing() {
        let lam = 1.0;
        let term = single(vec![
            LindbladTerm::amplitude_damping(0, lam),
            LindbladTerm::dephasing(0, lam),
        ]);
        let d = decompose_minimal(&term).unwrap();
        assert_abs_diff_eq!(d.c1, 4.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d.gamma, 2.75, epsilon = 1e-12);
    }

    #[test]
    fn zero_noise_gives_zero_generator() {
        let model = NoiseModel::new(1, vec![LindbladTerm::dephasing(0, 0.0)]).unwrap();
        let gen = recovery_generator(&model, Convention::Gksl).unwrap();
        assert!(gen.is_zero());
        let term = RecoveryTerm {
            support: vec![0],
            profile: TimeProfile::Constant,
            generator: RMatrix::zeros((4, 4)),
        };
        let d = decompose_minimal(&term).unwrap();
        assert_eq!((d.q0, d.c1, d.gamma), (0.0, 0.0, 0.0));
        assert!(d.cumulative.is_empty());
        assert_eq!(d.select(0.3), None);
        let lp = decompose_lp(&term, &extra_ids()).unwrap();
        assert_eq!(lp.c1, 0.0);
        assert!(lp.terms.is_empty());
    }

    #[test]
    fn crosstalk_two_qubit_generator() {
        let lam = 0.05;
        let dh = HamiltonianSpec::new(2, vec![PauliString::new(vec![Pauli::Z, Pauli::X], lam)]).unwrap();
        let model = NoiseModel::noiseless(2).with_coherent(dh.clone()).unwrap();
        let gen = recovery_generator(&model, Convention::Gksl).unwrap();
        assert_eq!(gen.terms.len(), 1);
        assert_eq!(gen.terms[0].support, vec![0, 1]);
        // generator equals minus the transfer matrix of −i[δH, ·]
        let commutator = Generator::new(&dh, &NoiseModel::noiseless(2), Convention::Gksl)
            .unwrap()
            .transfer_matrix(0.0);
        assert!(max_abs_diff(&gen.terms[0].generator, &commutator.mapv(|v| -v)) < 1e-14);
        let d = decompose_minimal(&gen.terms[0]).unwrap();
        assert!(d.residual(&gen.terms[0].generator) < 1e-10);
    }

    #[test]
    fn swapped_support_merges_consistently() {
        let op = crate::linalg::kron(&Pauli::Z.matrix(), &Pauli::X.matrix());
        let a = LindbladTerm::new(op.clone(), vec![0, 1], 0.2).unwrap();
        let b = LindbladTerm::new(op, vec![1, 0], 0.1).unwrap();
        let merged = recovery_generator(
            &NoiseModel::new(2, vec![a.clone(), b.clone()]).unwrap(),
            Convention::Gksl,
        )
        .unwrap();
        assert_eq!(merged.terms.len(), 1);
        let separate = RecoveryGenerator {
            terms: vec![
                recovery_generator(&NoiseModel::new(2, vec![a]).unwrap(), Convention::Gksl)
                    .unwrap()
                    .terms
                    .remove(0),
                recovery_generator(&NoiseModel::new(2, vec![b]).unwrap(), Convention::Gksl)
                    .unwrap()
                    .terms
                    .remove(0),
            ],
            ..merged.clone()
        };
        assert!(max_abs_diff(&merged.full_matrix(0.0).unwrap(), &separate.full_matrix(0.0).unwrap()) < 1e-14);
    }

    #[test]
    fn correction_identity_is_second_order() {
        let n = 2;
        let h = HamiltonianSpec::new(
            n,
            vec![
                PauliString::new(vec![Pauli::X, Pauli::X], 0.7),
                PauliString::new(vec![Pauli::Z, Pauli::I], -0.4),
            ],
        )
        .unwrap();
        let noise = NoiseModel::new(
            n,
            vec![
                LindbladTerm::amplitude_damping(0, 0.3),
                LindbladTerm::dephasing(1, 0.2),
                LindbladTerm::new(
                    crate::linalg::kron(&Pauli::Y.matrix(), &Pauli::Z.matrix()),
                    vec![1, 0],
                    0.1,
                )
                .unwrap(),
            ],
        )
        .unwrap()
        .with_coherent(HamiltonianSpec::new(n, vec![PauliString::new(vec![Pauli::Z, Pauli::X], 0.15)]).unwrap())
        .unwrap();
        let en = Generator::new(&h, &noise, Convention::Gksl)
            .unwrap()
            .transfer_matrix(0.0);
        let ei = Generator::new(&h, &NoiseModel::noiseless(n), Convention::Gksl)
            .unwrap()
            .transfer_matrix(0.0);
        let gq = recovery_generator(&noise, Convention::Gksl)
            .unwrap()
            .full_matrix(0.0)
            .unwrap();
        let id = identity::<f64>(16);
        let err = |dt: f64| {
            let lhs = matmul(&(&id + &gq.mapv(|v| v * dt)), &(&id + &en.mapv(|v| v * dt)));
            max_abs_diff(&lhs, &(&id + &ei.mapv(|v| v * dt)))
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        assert!(e1 < 1e-3);
        assert_abs_diff_eq!(e1 / e2, 4.0, epsilon = 1e-6);
    }

    #[test]
    fn doubled_convention_doubles_generator() {
        let model = NoiseModel::new(1, vec![LindbladTerm::amplitude_damping(0, 0.2)]).unwrap();
        let g1 = recovery_generator(&model, Convention::Gksl).unwrap();
        let g2 = recovery_generator(&model, Convention::Doubled).unwrap();
        assert!(max_abs_diff(&g2.terms[0].generator, &g1.terms[0].generator.mapv(|v| 2.0 * v)) < 1e-15);
    }

    #[test]
    fn lp_without_extras_matches_minimal() {
        for term in [
            single(vec![LindbladTerm::dephasing(0, 0.4)]),
            single(vec![
                LindbladTerm::amplitude_damping(0, 0.4),
                LindbladTerm::dephasing(0, 0.1),
            ]),
        ] {
            let min = decompose_minimal(&term).unwrap();
            let lp = decompose_lp(&term, &[]).unwrap();
            assert!(lp.residual(&term.generator) < 1e-10);
            assert!(lp.c1 <= min.c1 + 1e-9);
            assert_abs_diff_eq!(lp.c1, min.c1, epsilon = 1e-9);
        }
    }

    #[test]
    fn lp_over_complete_not_worse() {
        let term = single(vec![
            LindbladTerm::amplitude_damping(0, 1.0),
            LindbladTerm::dephasing(0, 1.0),
        ]);
        let min = decompose_minimal(&term).unwrap();
        let lp = decompose_lp(&term, &extra_ids()).unwrap();
        assert!(lp.residual(&term.generator) < 1e-10);
        assert!(lp.c1 <= min.c1 + 1e-9);
        let deph = single(vec![LindbladTerm::dephasing(0, 1.0)]);
        assert!(decompose_lp(&deph, &extra_ids()).unwrap().c1 <= 2.0 + 1e-9);
    }

    #[test]
    fn lp_two_qubit_complete() {
        let dh = HamiltonianSpec::new(2, vec![PauliString::new(vec![Pauli::Z, Pauli::X], 0.1)]).unwrap();
        let model = NoiseModel::noiseless(2).with_coherent(dh).unwrap();
        let term = recovery_generator(&model, Convention::Gksl).unwrap().terms.remove(0);
        let min = decompose_minimal(&term).unwrap();
        let lp = decompose_lp(&term, &[]).unwrap();
        assert!(lp.residual(&term.generator) < 1e-10);
        assert!(lp.c1 <= min.c1 + 1e-9);
    }

    #[test]
    fn simplex_small_problem() {
        // min -x - y  s.t. x + 2y + s1 = 4, 3x + y + s2 = 6
        let a = ndarray::array![[1.0, 2.0, 1.0, 0.0], [3.0, 1.0, 0.0, 1.0]];
        let b = ndarray::array![4.0, 6.0];
        let c = ndarray::array![-1.0, -1.0, 0.0, 0.0];
        let x = simplex_minimize(&a, &b, &c).unwrap();
        assert_abs_diff_eq!(x[0], 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 1.2, epsilon = 1e-12);
    }

    #[test]
    fn simplex_detects_infeasible_and_unbounded() {
        let a = ndarray::array![[1.0, 1.0]];
        assert_eq!(
            simplex_minimize(&a, &ndarray::array![-1.0], &ndarray::array![1.0, 1.0]),
            Err(QemError::Infeasible)
        );
        let a = ndarray::array![[1.0, -1.0]];
        assert_eq!(
            simplex_minimize(&a, &ndarray::array![1.0], &ndarray::array![-1.0, 0.0]),
            Err(QemError::Unbounded)
        );
    }

    #[test]
    fn sampling_table_bins() {
        let d = QuasiDecomposition::new(
            vec![0],
            TimeProfile::Constant,
            0.0,
            vec![(BasisLabel::Single(2), 0.5), (BasisLabel::Single(3), -0.5)],
        );
        let t = sampling_tables(&d);
        assert_eq!(t.bins, vec![0.5, 1.0]);
        assert_eq!(t.alpha, vec![1.0, -1.0]);
        assert_eq!(d.select(0.0), Some(0));
        assert_eq!(d.select(0.4999), Some(0));
        assert_eq!(d.select(0.5), Some(1));
        assert_eq!(d.select(1.0), Some(1));
        assert_abs_diff_eq!(t.step_factor(0.1), 1.0 + 0.1 * d.c1);
        let deph = sampling_tables(&analytic_decomposition(AnalyticNoise::Dephasing, 0.2));
        assert_eq!(deph.bins, vec![1.0]);
        assert_eq!(deph.labels, vec![BasisLabel::Single(4)]);
        assert_eq!(deph.alpha, vec![-1.0]);
        assert_abs_diff_eq!(deph.gamma, 0.2);
    }

    #[test]
    fn cost_examples() {
        let d = analytic_decomposition(AnalyticNoise::Dephasing, 0.04);
        let r = cost_overhead(std::slice::from_ref(&d), 2.0, 1, 0.04).unwrap();
        assert_abs_diff_eq!(r.c, 0.16f64.exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(r.c, 1.1735, epsilon = 1e-4);
        assert_abs_diff_eq!(r.c2, 1.3771, epsilon = 1e-4);
        let zero = cost_overhead(std::slice::from_ref(&d), 0.0, 1, 0.04).unwrap();
        assert_eq!((zero.c, zero.lambda), (1.0, 0.0));
        let big = cost_overhead(&[], 1.0, 100, 0.01).unwrap();
        assert_abs_diff_eq!(big.lambda, 1.0, epsilon = 1e-14);
        assert!(cost_overhead(&[d], -1.0, 1, 0.0).is_err());
    }

    #[test]
    fn linear_profile_cost() {
        let mut d = analytic_decomposition(AnalyticNoise::Dephasing, 0.1);
        d.profile = TimeProfile::Linear;
        let r = cost_overhead(&[d], 2.0, 1, 0.1).unwrap();
        assert_abs_diff_eq!(r.log_c, 0.2 * 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.mean_jumps, 0.1 * 2.0, epsilon = 1e-14);
    }

    #[test]
    fn product_of_step_factors_converges() {
        let d = analytic_decomposition(AnalyticNoise::Dephasing, 0.04);
        let t_end = 2.0;
        let steps = 10_000;
        let dt = t_end / steps as f64;
        let prod = (0..steps).fold(1.0, |acc, _| acc * sampling_tables(&d).step_factor(dt));
        let exact = cost_overhead(&[d], t_end, 1, 0.04).unwrap().c;
        assert!((prod - exact).abs() / exact <= 1e-4);
    }

    #[test]
    fn depolarizing_inverse_examples() {
        let zero = invert_depolarizing(0.0).unwrap();
        assert_eq!((zero.c, zero.p1, zero.p2), (1.0, 1.0, 0.0));
        let half = invert_depolarizing(0.5).unwrap();
        assert_abs_diff_eq!(half.c, 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(half.p1, 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(half.p2, 0.1, epsilon = 1e-15);
        assert!(invert_depolarizing(1.0).is_err());
        for k in 0..10 {
            let p = 0.1 * k as f64;
            let inv = invert_depolarizing(p).unwrap();
            let prod = matmul(&inv.transfer_matrix(), &depolarizing_ptm(p));
            assert!(max_abs_diff(&prod, &identity::<f64>(4)) < 1e-12, "p = {p}");
        }
        let p = 0.3;
        let prod = matmul(&invert_depolarizing(p).unwrap().transfer_matrix(), &depolarizing_ptm(p));
        assert!(max_abs_diff(&prod, &identity::<f64>(4)) < 1e-12);
    }

    #[test]
    fn depolarizing_ptm_matches_kraus_form() {
        let p = 0.37;
        let ptm = local_ptm(1, |x| {
            let mut out = x.mapv(|z| z * (1.0 - 0.75 * p));
            for s in [Pauli::X, Pauli::Y, Pauli::Z] {
                let m = s.matrix();
                out = out + matmul(&matmul(&m, x), &m).mapv(|z| z * (p / 4.0));
            }
            out
        });
        assert!(max_abs_diff(&ptm, &depolarizing_ptm(p)) < 1e-15);
    }
}
