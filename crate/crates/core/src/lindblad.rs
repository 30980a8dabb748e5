// Copyright 2026 The qemforge Authors
// SPDX-License-Identifier: Apache-2.0

//! Master-equation models and their time integration.
//!
//! Units: time in µs, rates in 1/µs, Hamiltonian coefficients in rad/µs.
//! The dissipator is stored in GKSL form `λ g(t) (LρL† − ½{L†L, ρ})`; the
//! `Doubled` convention multiplies it by two.

use ndarray::linalg::general_mat_mul;
use ndarray::Array1;

use crate::error::{invalid, QemError, Result};
use crate::linalg::{
    c64, dagger, expm, hermiticity_defect, hermitize, matmul, norm1, CMatrix, RMatrix, C64, ONE, ZERO,
};
use crate::pauli::{
    add_sandwich, embed_operator, from_pauli_traces_real, pauli_traces_real, EmbeddedMap, Pauli, PauliString,
    SupportIndex,
};

/// Scalar multiplier of a Hamiltonian or a noise rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TimeProfile {
    /// `g(t) = 1`.
    #[default]
    Constant,
    /// `g(t) = t` (t in µs).
    Linear,
}

impl TimeProfile {
    #[inline]
    pub fn value(self, t: f64) -> f64 {
        match self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Linear => t,
        }
    }

    /// `∫_a^b g(t) dt`.
    pub fn integral(self, a: f64, b: f64) -> f64 {
        match self {
            TimeProfile::Constant => b - a,
            TimeProfile::Linear => 0.5 * (b * b - a * a),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TimeProfile::Constant => "constant",
            TimeProfile::Linear => "linear",
        }
    }
}

/// A Pauli-sum Hamiltonian `H(t) = p(t/r)/r · Σ c_k P_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    pub num_qubits: usize,
    pub terms: Vec<PauliString>,
    pub profile: TimeProfile,
    pub rescale: f64,
}

impl HamiltonianSpec {
    pub fn new(num_qubits: usize, terms: Vec<PauliString>) -> Result<Self> {
        for t in &terms {
            if t.num_qubits() != num_qubits {
                return Err(QemError::DimensionMismatch {
                    expected: num_qubits,
                    found: t.num_qubits(),
                });
            }
            if !t.coefficient.is_finite() {
                return Err(invalid("hamiltonian", format!("non-finite coefficient in {t}")));
            }
        }
        Ok(Self {
            num_qubits,
            terms,
            profile: TimeProfile::Constant,
            rescale: 1.0,
        })
    }

    pub fn zero(num_qubits: usize) -> Self {
        Self {
            num_qubits,
            terms: Vec::new(),
            profile: TimeProfile::Constant,
            rescale: 1.0,
        }
    }

    pub fn with_profile(mut self, profile: TimeProfile) -> Self {
        self.profile = profile;
        self
    }

    /// `(1/r) H(t/r)`, composed with any rescaling already present.
    pub fn rescaled(&self, r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(invalid("rescale", format!("must be positive, got {r}")));
        }
        let mut out = self.clone();
        out.rescale *= r;
        Ok(out)
    }

    /// Multiplier of the static matrix at time `t`.
    #[inline]
    pub fn multiplier(&self, t: f64) -> f64 {
        self.profile.value(t / self.rescale) / self.rescale
    }

    /// `Σ c_k P_k` without the time multiplier.
    pub fn matrix(&self) -> CMatrix {
        let d = 1usize << self.num_qubits;
        let mut m = CMatrix::zeros((d, d));
        for t in &self.terms {
            m = m + t.matrix();
        }
        m
    }

    /// Upper bound on the spectral norm of the static matrix.
    pub fn norm_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient.abs()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coefficient == 0.0)
    }
}

/// One local jump operator with its rate and profile.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladTerm {
    pub operator: CMatrix,
    pub support: Vec<usize>,
    pub rate: f64,
    pub profile: TimeProfile,
}

impl LindbladTerm {
    pub fn new(operator: CMatrix, support: Vec<usize>, rate: f64) -> Result<Self> {
        let d = 1usize << support.len();
        if operator.nrows() != d || operator.ncols() != d {
            return Err(QemError::DimensionMismatch {
                expected: d,
                found: operator.nrows(),
            });
        }
        if !rate.is_finite() {
            return Err(invalid("rate", "must be finite"));
        }
        Ok(Self {
            operator,
            support,
            rate,
            profile: TimeProfile::Constant,
        })
    }

    pub fn with_profile(mut self, profile: TimeProfile) -> Self {
        self.profile = profile;
        self
    }

    /// `L = σz` on `qubit`.
    pub fn dephasing(qubit: usize, rate: f64) -> Self {
        Self::new(Pauli::Z.matrix(), vec![qubit], rate).expect("2x2")
    }

    /// `L = σ₋ = |0⟩⟨1|` on `qubit`.
    pub fn amplitude_damping(qubit: usize, rate: f64) -> Self {
        let sm = ndarray::array![[ZERO, ONE], [ZERO, ZERO]];
        Self::new(sm, vec![qubit], rate).expect("2x2")
    }

    /// Single-qubit depolarizing noise of strength `rate`, as three Pauli
    /// jump terms of rate `rate/4`.
    pub fn depolarizing(qubit: usize, rate: f64) -> Vec<Self> {
        [Pauli::X, Pauli::Y, Pauli::Z]
            .into_iter()
            .map(|p| Self::new(p.matrix(), vec![qubit], rate / 4.0).expect("2x2"))
            .collect()
    }

    /// Local dissipator superoperator applied to a local operator.
    pub fn apply_local(&self, x: &CMatrix) -> CMatrix {
        let l = &self.operator;
        let ld = dagger(l);
        let ldl = matmul(&ld, l);
        let sandwich = matmul(&matmul(l, x), &ld);
        let anti = matmul(&ldl, x) + matmul(x, &ldl);
        (sandwich - anti.mapv(|z| z * 0.5)).mapv(|z| z * self.rate)
    }
}

/// Local Lindblad terms plus an optional coherent error `δH`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub num_qubits: usize,
    pub terms: Vec<LindbladTerm>,
    pub coherent: Option<HamiltonianSpec>,
}

impl NoiseModel {
    pub fn new(num_qubits: usize, terms: Vec<LindbladTerm>) -> Result<Self> {
        let model = Self {
            num_qubits,
            terms,
            coherent: None,
        };
        model.validate_structure()?;
        Ok(model)
    }

    pub fn noiseless(num_qubits: usize) -> Self {
        Self {
            num_qubits,
            terms: Vec::new(),
            coherent: None,
        }
    }

    pub fn with_coherent(mut self, coherent: HamiltonianSpec) -> Result<Self> {
        if coherent.num_qubits != self.num_qubits {
            return Err(QemError::DimensionMismatch {
                expected: self.num_qubits,
                found: coherent.num_qubits,
            });
        }
        for t in &coherent.terms {
            let arity = t.support().len();
            if arity > 2 {
                return Err(QemError::NonLocalTerm { arity });
            }
        }
        self.coherent = Some(coherent);
        Ok(self)
    }

    fn validate_structure(&self) -> Result<()> {
        for t in &self.terms {
            if t.support.is_empty() {
                return Err(QemError::EmptyInput("noise term support"));
            }
            if t.support.len() > 2 {
                return Err(QemError::NonLocalTerm { arity: t.support.len() });
            }
            SupportIndex::new(self.num_qubits, &t.support, 2)?;
        }
        Ok(())
    }

    /// Checks that every rate is nonnegative.
    pub fn validate_physical(&self) -> Result<()> {
        for t in &self.terms {
            if t.rate < 0.0 {
                return Err(invalid("rate", format!("negative rate {}", t.rate)));
            }
        }
        Ok(())
    }

    /// Signed model `self − other`: the terms of `self` followed by the terms
    /// of `other` with negated rates, and `δH_self − δH_other`.
    pub fn difference(&self, other: &NoiseModel) -> Result<NoiseModel> {
        if self.num_qubits != other.num_qubits {
            return Err(QemError::DimensionMismatch {
                expected: self.num_qubits,
                found: other.num_qubits,
            });
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().map(|t| LindbladTerm {
            rate: -t.rate,
            ..t.clone()
        }));
        let coherent = match (&self.coherent, &other.coherent) {
            (None, None) => None,
            (a, b) => {
                let mut out = a.clone().unwrap_or_else(|| HamiltonianSpec::zero(self.num_qubits));
                if let Some(b) = b {
                    if out.profile != b.profile && !out.terms.is_empty() {
                        return Err(invalid(
                            "coherent error",
                            "difference of coherent errors needs a shared profile",
                        ));
                    }
                    out.profile = b.profile;
                    out.terms.extend(b.terms.iter().map(|t| PauliString {
                        coefficient: -t.coefficient,
                        ..t.clone()
                    }));
                }
                Some(out)
            }
        };
        Ok(NoiseModel {
            num_qubits: self.num_qubits,
            terms,
            coherent,
        })
    }

    /// Multiplies every rate and the coherent error by `factor`.
    pub fn scaled(&self, factor: f64) -> NoiseModel {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.rate *= factor;
        }
        if let Some(c) = &mut out.coherent {
            for t in &mut c.terms {
                t.coefficient *= factor;
            }
        }
        out
    }

    /// Sum of all Lindblad rates (profile multipliers excluded).
    pub fn total_rate(&self) -> f64 {
        self.terms.iter().map(|t| t.rate).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.iter().all(|t| t.rate == 0.0) && self.coherent.as_ref().map_or(true, |c| c.is_zero())
    }

    pub fn is_time_independent(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.profile == TimeProfile::Constant || t.rate == 0.0)
            && self
                .coherent
                .as_ref()
                .map_or(true, |c| c.profile == TimeProfile::Constant || c.is_zero())
    }
}

/// Normalization convention of the dissipator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convention {
    /// `λ(LρL† − ½{L†L, ρ})`.
    #[default]
    Gksl,
    /// `λ(2LρL† − {L†L, ρ})`.
    Doubled,
}

impl Convention {
    pub fn factor(self) -> f64 {
        match self {
            Convention::Gksl => 1.0,
            Convention::Doubled => 2.0,
        }
    }
}

/// A (possibly subnormalized) density matrix at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    pub matrix: CMatrix,
    pub time: f64,
}

impl DensityState {
    pub fn new(matrix: CMatrix, time: f64) -> Result<Self> {
        let d = matrix.nrows();
        if matrix.ncols() != d || d == 0 || !d.is_power_of_two() {
            return Err(invalid("state", format!("shape {:?} is not 2^n square", matrix.dim())));
        }
        let defect = hermiticity_defect(&matrix);
        if defect > 1e-10 {
            return Err(QemError::NonHermitian { deviation: defect });
        }
        let tr = matrix.diag().iter().map(|z| z.re).sum::<f64>();
        if tr < -1e-12 {
            return Err(invalid("state", format!("negative trace {tr}")));
        }
        Ok(Self { matrix, time })
    }

    /// `|ψ⟩⟨ψ|` for a normalized or unnormalized vector.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if norm <= 0.0 {
            return Err(invalid("state", "zero vector"));
        }
        let s = 1.0 / norm.sqrt();
        let v: Vec<C64> = psi.iter().map(|z| z * s).collect();
        let d = v.len();
        Self::new(CMatrix::from_shape_fn((d, d), |(i, j)| v[i] * v[j].conj()), 0.0)
    }

    /// `|+⟩^{⊗n}`.
    pub fn plus_state(n: usize) -> Self {
        let d = 1usize << n;
        Self {
            matrix: CMatrix::from_elem((d, d), c64(1.0 / d as f64, 0.0)),
            time: 0.0,
        }
    }

    /// Computational basis state with the given index.
    pub fn computational(n: usize, index: usize) -> Self {
        let d = 1usize << n;
        let mut m = CMatrix::zeros((d, d));
        m[[index, index]] = ONE;
        Self { matrix: m, time: 0.0 }
    }

    pub fn maximally_mixed(n: usize) -> Self {
        let d = 1usize << n;
        Self {
            matrix: CMatrix::from_diag_elem(d, c64(1.0 / d as f64, 0.0)),
            time: 0.0,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.matrix.nrows().trailing_zeros() as usize
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diag().iter().map(|z| z.re).sum()
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `Re Tr(O ρ)`.
    pub fn expectation(&self, observable: &CMatrix) -> f64 {
        expectation(observable, &self.matrix)
    }
}

/// `Re Tr(O ρ)` in `O(d²)`.
pub fn expectation(observable: &CMatrix, rho: &CMatrix) -> f64 {
    let d = rho.nrows();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            let o = observable[[i, j]];
            if o != ZERO {
                acc += (o * rho[[j, i]]).re;
            }
        }
    }
    acc
}

/// Integration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionConfig {
    pub t_end: f64,
    pub tolerance: f64,
    pub max_step: f64,
    pub convention: Convention,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            tolerance: 1e-10,
            max_step: f64::INFINITY,
            convention: Convention::Gksl,
        }
    }
}

impl EvolutionConfig {
    pub fn until(t_end: f64) -> Self {
        Self {
            t_end,
            ..Self::default()
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn with_convention(mut self, convention: Convention) -> Self {
        self.convention = convention;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(invalid(
                "t_end",
                format!("must be finite and nonnegative, got {}", self.t_end),
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        if !(self.max_step > 0.0) {
            return Err(invalid("max_step", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct JumpTerm {
    op: CMatrix,
    idx: SupportIndex,
    weight: f64,
    profile: TimeProfile,
}

#[derive(Debug, Clone)]
struct SuperTerm {
    map: EmbeddedMap,
    weight: f64,
    profile: TimeProfile,
}

/// Compiled right-hand side `dρ/dt = 𝓛_t(ρ)`.
///
/// Written as `−i H_eff ρ + i ρ H_eff† + Σ w g(t) LρL† + Σ s g(t) ℰ(ρ)` with
/// `H_eff = H(t) − (i/2) Σ w g(t) L†L`; this relies on `ρ` being Hermitian,
/// which every state and Pauli basis matrix is.
#[derive(Debug, Clone)]
pub struct Generator {
    num_qubits: usize,
    hamiltonians: Vec<(HamiltonianSpec, CMatrix)>,
    anti: Vec<(TimeProfile, CMatrix)>,
    jumps: Vec<JumpTerm>,
    supers: Vec<SuperTerm>,
    static_heff: Option<CMatrix>,
}

impl Generator {
    pub fn new(h: &HamiltonianSpec, noise: &NoiseModel, convention: Convention) -> Result<Self> {
        if h.num_qubits != noise.num_qubits {
            return Err(QemError::DimensionMismatch {
                expected: h.num_qubits,
                found: noise.num_qubits,
            });
        }
        noise.validate_structure()?;
        let n = h.num_qubits;
        let d = 1usize << n;
        let mut hamiltonians = Vec::new();
        if !h.is_zero() {
            hamiltonians.push((h.clone(), h.matrix()));
        }
        if let Some(c) = &noise.coherent {
            if !c.is_zero() {
                hamiltonians.push((c.clone(), c.matrix()));
            }
        }
        let mut jumps = Vec::new();
        let mut anti: Vec<(TimeProfile, CMatrix)> = Vec::new();
        for t in &noise.terms {
            if t.rate == 0.0 {
                continue;
            }
            let weight = t.rate * convention.factor();
            let ldl = matmul(&dagger(&t.operator), &t.operator);
            let full = embed_operator(&ldl, &t.support, n)?.mapv(|z| z * weight);
            match anti.iter_mut().find(|(p, _)| *p == t.profile) {
                Some((_, m)) => *m = &*m + &full,
                None => anti.push((t.profile, full)),
            }
            jumps.push(JumpTerm {
                op: t.operator.clone(),
                idx: SupportIndex::new(n, &t.support, 2)?,
                weight,
                profile: t.profile,
            });
        }
        let mut g = Self {
            num_qubits: n,
            hamiltonians,
            anti,
            jumps,
            supers: Vec::new(),
            static_heff: None,
        };
        if g.is_time_independent() {
            g.static_heff = Some(g.heff(0.0, d));
        }
        Ok(g)
    }

    /// Adds the term `weight · g(t) · ℰ(ρ)` for an embedded local map.
    pub fn with_superoperator(mut self, map: EmbeddedMap, weight: f64, profile: TimeProfile) -> Result<Self> {
        if map.num_qubits != self.num_qubits {
            return Err(QemError::DimensionMismatch {
                expected: self.num_qubits,
                found: map.num_qubits,
            });
        }
        self.supers.push(SuperTerm { map, weight, profile });
        Ok(self)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn is_time_independent(&self) -> bool {
        self.hamiltonians
            .iter()
            .all(|(h, _)| h.profile == TimeProfile::Constant)
            && self.anti.iter().all(|(p, _)| *p == TimeProfile::Constant)
            && self.supers.iter().all(|s| s.profile == TimeProfile::Constant)
    }

    fn heff(&self, t: f64, d: usize) -> CMatrix {
        let mut m = CMatrix::zeros((d, d));
        for (h, mat) in &self.hamiltonians {
            let c = h.multiplier(t);
            if c != 0.0 {
                m.scaled_add(c64(c, 0.0), mat);
            }
        }
        for (p, mat) in &self.anti {
            let g = p.value(t);
            if g != 0.0 {
                m.scaled_add(c64(0.0, -0.5 * g), mat);
            }
        }
        m
    }

    /// Upper bound on the induced norm of the generator, used for step sizes.
    pub fn norm_bound(&self, t: f64) -> f64 {
        let mut b = 0.0;
        for (h, _) in &self.hamiltonians {
            b += 2.0 * h.multiplier(t).abs() * h.norm_bound();
        }
        for j in &self.jumps {
            let l = norm1(&j.op);
            b += 2.0 * (j.weight * j.profile.value(t)).abs() * l * l;
        }
        for s in &self.supers {
            let w: f64 = s.map.terms.iter().map(|(c, a)| c.abs() * norm1(a).powi(2)).sum();
            b += (s.weight * s.profile.value(t)).abs() * w;
        }
        b
    }

    /// Writes `𝓛_t(ρ)` into `out`.
    pub fn apply(&self, t: f64, rho: &CMatrix, out: &mut CMatrix) {
        let d = rho.nrows();
        let owned;
        let heff = match &self.static_heff {
            Some(h) => h,
            None => {
                owned = self.heff(t, d);
                &owned
            }
        };
        general_mat_mul(ONE, heff, rho, ZERO, out);
        // out ← −iK + iK†
        for i in 0..d {
            for j in i..d {
                let a = out[[i, j]];
                let b = out[[j, i]];
                let v = c64(0.0, -1.0) * a + c64(0.0, 1.0) * b.conj();
                out[[i, j]] = v;
                out[[j, i]] = v.conj();
            }
        }
        for jt in &self.jumps {
            let w = jt.weight * jt.profile.value(t);
            if w != 0.0 {
                add_sandwich(w, &jt.op, &jt.idx, rho, out);
            }
        }
        for st in &self.supers {
            let w = st.weight * st.profile.value(t);
            if w != 0.0 {
                st.map.add_apply(w, rho, out);
            }
        }
    }

    /// Pauli transfer matrix of `𝓛_t`, `4^n × 4^n`.
    pub fn transfer_matrix(&self, t: f64) -> RMatrix {
        let n = self.num_qubits;
        let d = 1usize << n;
        let dim = d * d;
        let mut g = RMatrix::zeros((dim, dim));
        let mut col = Array1::zeros(dim);
        let mut out = CMatrix::zeros((d, d));
        for j in 0..dim {
            let pj = PauliString::from_index(n, j, 1.0).matrix();
            self.apply(t, &pj, &mut out);
            pauli_traces_real(&out, n, &mut col);
            for k in 0..dim {
                g[[k, j]] = col[k] / d as f64;
            }
        }
        g
    }
}

/// Right-hand side of the master equation at the state's time.
pub fn generator_apply(state: &DensityState, h: &HamiltonianSpec, noise: &NoiseModel) -> Result<CMatrix> {
    let g = Generator::new(h, noise, Convention::Gksl)?;
    let mut out = CMatrix::zeros(state.matrix.raw_dim());
    g.apply(state.time, &state.matrix, &mut out);
    Ok(out)
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

fn combine(out: &mut CMatrix, y: &CMatrix, h: f64, terms: &[(f64, &CMatrix)]) {
    let o = out.as_slice_mut().expect("standard layout");
    let ys = y.as_slice().expect("standard layout");
    o.copy_from_slice(ys);
    for (c, k) in terms {
        if *c == 0.0 {
            continue;
        }
        let s = h * c;
        for (oi, ki) in o.iter_mut().zip(k.as_slice().expect("standard layout")) {
            *oi += ki * s;
        }
    }
}

/// Adaptive Dormand–Prince integrator for density matrices.
#[derive(Debug)]
pub struct Integrator<'g> {
    generator: &'g Generator,
    tolerance: f64,
    max_step: f64,
    h: Option<f64>,
    k: [CMatrix; 7],
    tmp: CMatrix,
    y_new: CMatrix,
}

impl<'g> Integrator<'g> {
    pub fn new(generator: &'g Generator, tolerance: f64, max_step: f64) -> Self {
        let d = 1usize << generator.num_qubits();
        let z = || CMatrix::zeros((d, d));
        Self {
            generator,
            tolerance,
            max_step,
            h: None,
            k: [z(), z(), z(), z(), z(), z(), z()],
            tmp: z(),
            y_new: z(),
        }
    }

    fn initial_step(&self, t: f64, y: &CMatrix, span: f64) -> f64 {
        let scale = y.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(1e-300);
        let nb = self.generator.norm_bound(t).max(1e-300);
        let guess = 0.01 * self.tolerance.powf(0.2) / nb * scale.max(1.0);
        guess.min(span).min(self.max_step).max(span * 1e-12)
    }

    /// Advances `y` from `t0` to `t1`.
    pub fn advance(&mut self, y: &mut CMatrix, t0: f64, t1: f64) -> Result<()> {
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(());
        }
        let mut t = t0;
        let mut h = self.h.unwrap_or_else(|| self.initial_step(t0, y, span));
        let g = self.generator;
        g.apply(t, y, &mut self.k[0]);
        let rtol = self.tolerance;
        let atol = self.tolerance;
        while t < t1 {
            h = h.min(self.max_step);
            let last = t + h >= t1 - 1e-14 * t1.abs().max(1.0);
            let step = if last { t1 - t } else { h };
            if step < 1e-14 * t.abs().max(1.0) && !last {
                return Err(QemError::StepUnderflow { time: t, step });
            }
            let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
            combine(&mut self.tmp, y, step, &[(A21, k1)]);
            g.apply(t + C2 * step, &self.tmp, k2);
            combine(&mut self.tmp, y, step, &[(A31, k1), (A32, k2)]);
            g.apply(t + C3 * step, &self.tmp, k3);
            combine(&mut self.tmp, y, step, &[(A41, k1), (A42, k2), (A43, k3)]);
            g.apply(t + C4 * step, &self.tmp, k4);
            combine(&mut self.tmp, y, step, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]);
            g.apply(t + C5 * step, &self.tmp, k5);
            combine(
                &mut self.tmp,
                y,
                step,
                &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)],
            );
            g.apply(t + step, &self.tmp, k6);
            combine(
                &mut self.y_new,
                y,
                step,
                &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)],
            );
            g.apply(t + step, &self.y_new, k7);
            let mut err = 0.0f64;
            {
                let ys = y.as_slice().expect("standard layout");
                let yn = self.y_new.as_slice().expect("standard layout");
                let (k1s, k3s, k4s, k5s, k6s, k7s) = (
                    k1.as_slice().unwrap(),
                    k3.as_slice().unwrap(),
                    k4.as_slice().unwrap(),
                    k5.as_slice().unwrap(),
                    k6.as_slice().unwrap(),
                    k7.as_slice().unwrap(),
                );
                for i in 0..ys.len() {
                    let e = (k1s[i] * E1 + k3s[i] * E3 + k4s[i] * E4 + k5s[i] * E5 + k6s[i] * E6 + k7s[i] * E7) * step;
                    let sc = atol + rtol * ys[i].norm().max(yn[i].norm());
                    err = err.max(e.norm() / sc);
                }
            }
            if !err.is_finite() {
                return Err(QemError::Divergence { time: t });
            }
            if err <= 1.0 {
                t = if last { t1 } else { t + step };
                std::mem::swap(y, &mut self.y_new);
                let (first, rest) = self.k.split_at_mut(1);
                std::mem::swap(&mut first[0], &mut rest[5]);
                let bound = y.iter().fold(0.0f64, |a, z| a.max(z.norm()));
                if !bound.is_finite() || bound > 1e8 {
                    return Err(QemError::Divergence { time: t });
                }
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !last {
                    h = step * factor;
                } else {
                    h = h.max(step * factor.min(1.0));
                }
            } else {
                h = step * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(QemError::StepUnderflow { time: t, step: h });
                }
            }
        }
        self.h = Some(h);
        Ok(())
    }
}

/// Integrates `state` under `generator`, returning the states at each
/// requested absolute time (nondecreasing, not before `state.time`).
pub fn evolve_checkpoints(
    generator: &Generator,
    state: &DensityState,
    times: &[f64],
    tolerance: f64,
    max_step: f64,
) -> Result<Vec<DensityState>> {
    let mut integ = Integrator::new(generator, tolerance, max_step);
    let mut y = state.matrix.clone();
    let mut t = state.time;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if target < t - 1e-12 {
            return Err(invalid("checkpoints", "times must be nondecreasing"));
        }
        integ.advance(&mut y, t, target)?;
        t = target.max(t);
        let mut m = y.clone();
        hermitize(&mut m);
        out.push(DensityState { matrix: m, time: t });
    }
    Ok(out)
}

fn check_state(state: &DensityState, n: usize) -> Result<()> {
    if state.num_qubits() != n {
        return Err(QemError::DimensionMismatch {
            expected: n,
            found: state.num_qubits(),
        });
    }
    Ok(())
}

fn run(generator: &Generator, state: &DensityState, cfg: &EvolutionConfig) -> Result<DensityState> {
    cfg.validate()?;
    check_state(state, generator.num_qubits())?;
    let end = state.time + cfg.t_end;
    let mut out = evolve_checkpoints(generator, state, &[end], cfg.tolerance, cfg.max_step)?;
    Ok(out.pop().expect("one checkpoint"))
}

/// `dρ/dt = −i[H(t), ρ]` for `cfg.t_end`.
pub fn evolve_ideal(state: &DensityState, h: &HamiltonianSpec, cfg: &EvolutionConfig) -> Result<DensityState> {
    let g = Generator::new(h, &NoiseModel::noiseless(h.num_qubits), cfg.convention)?;
    run(&g, state, cfg)
}

/// Noisy evolution with nonnegative rates.
pub fn evolve_noisy(
    state: &DensityState,
    h: &HamiltonianSpec,
    noise: &NoiseModel,
    cfg: &EvolutionConfig,
) -> Result<DensityState> {
    noise.validate_physical()?;
    let g = Generator::new(h, noise, cfg.convention)?;
    run(&g, state, cfg)
}

/// Evolution under `H` plus a signed noise difference `Δ𝓛`; the generator
/// need not be completely positive.
pub fn evolve_effective(
    state: &DensityState,
    h: &HamiltonianSpec,
    delta: &NoiseModel,
    cfg: &EvolutionConfig,
) -> Result<DensityState> {
    let g = Generator::new(h, delta, cfg.convention)?;
    run(&g, state, cfg)
}

/// Evolution under `(1/r)H(t/r)` (coherent error included) for `r·t_end`
/// with the noise left unchanged.
pub fn evolve_rescaled(
    state: &DensityState,
    h: &HamiltonianSpec,
    noise: &NoiseModel,
    r: f64,
    cfg: &EvolutionConfig,
) -> Result<DensityState> {
    if !(r >= 1.0) {
        return Err(invalid("r", format!("rescale factor must be at least 1, got {r}")));
    }
    let (hr, nr) = rescale_pair(h, noise, r)?;
    let scaled = EvolutionConfig {
        t_end: cfg.t_end * r,
        ..*cfg
    };
    let g = Generator::new(&hr, &nr, cfg.convention)?;
    run(&g, state, &scaled)
}

/// Rescales both the Hamiltonian and the coherent part of the noise.
pub fn rescale_pair(h: &HamiltonianSpec, noise: &NoiseModel, r: f64) -> Result<(HamiltonianSpec, NoiseModel)> {
    let hr = h.rescaled(r)?;
    let mut nr = noise.clone();
    if let Some(c) = &noise.coherent {
        nr.coherent = Some(c.rescaled(r)?);
    }
    Ok((hr, nr))
}

/// `exp(t 𝓛)` applied through the dense transfer matrix; an oracle for
/// time-independent generators on few qubits.
pub fn evolve_expm(generator: &Generator, state: &DensityState, t: f64) -> Result<DensityState> {
    if !generator.is_time_independent() {
        return Err(invalid(
            "generator",
            "matrix-exponential path needs a time-independent generator",
        ));
    }
    let n = generator.num_qubits();
    let g = generator.transfer_matrix(0.0).mapv(|v| v * t);
    let e = expm(&g);
    let mut v = Array1::zeros(1 << (2 * n));
    pauli_traces_real(&state.matrix, n, &mut v);
    let v = e.dot(&v);
    let mut m = CMatrix::zeros(state.matrix.raw_dim());
    from_pauli_traces_real(&v, n, &mut m);
    Ok(DensityState {
        matrix: m,
        time: state.time + t,
    })
}

/// Dense propagator `exp(τ G)` for `0 ≤ τ ≤ span`, for a time-independent
/// transfer-matrix generator `G`.
///
/// Stores `exp(G span/2^k)` for `k = 0..K` with `‖G‖ span/2^K ≤ ½`; an
/// arbitrary `τ` is applied as a product over its binary digits plus a short
/// Taylor series for the remainder.
#[derive(Debug, Clone)]
pub struct PauliPropagator {
    generator: RMatrix,
    span: f64,
    levels: Vec<RMatrix>,
}

impl PauliPropagator {
    pub fn new(generator: RMatrix, span: f64) -> Result<Self> {
        if !(span > 0.0 && span.is_finite()) {
            return Err(invalid("span", "must be positive"));
        }
        let norm = norm1(&generator);
        let mut k = 0usize;
        while norm * span / 2f64.powi(k as i32) > 0.5 && k < 60 {
            k += 1;
        }
        let finest = expm(&generator.mapv(|v| v * span / 2f64.powi(k as i32)));
        let mut levels = vec![finest];
        for _ in 0..k {
            let prev = levels.last().expect("nonempty");
            levels.push(matmul(prev, prev));
        }
        levels.reverse();
        Ok(Self {
            generator,
            span,
            levels,
        })
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn generator(&self) -> &RMatrix {
        &self.generator
    }

    /// `v ← exp(τ G) v`.
    pub fn apply(&self, v: &mut Array1<f64>, tau: f64) {
        if tau <= 0.0 {
            return;
        }
        if tau >= self.span * (1.0 - 1e-15) {
            *v = self.levels[0].dot(v);
            let extra = tau - self.span;
            if extra > 0.0 {
                self.taylor(v, extra);
            }
            return;
        }
        let mut rest = tau;
        let mut h = self.span;
        for level in &self.levels {
            if rest >= h {
                *v = level.dot(v);
                rest -= h;
            }
            h *= 0.5;
        }
        if rest > 0.0 {
            self.taylor(v, rest);
        }
    }

    fn taylor(&self, v: &mut Array1<f64>, tau: f64) {
        let mut term = v.clone();
        let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
        for j in 1..40 {
            term = self.generator.dot(&term) * (tau / j as f64);
            *v += &term;
            if term.iter().fold(0.0f64, |a, x| a.max(x.abs())) <= 1e-17 * scale {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, trace_distance};
    use approx::assert_abs_diff_eq;
    use std::str::FromStr;

    fn ps(s: &str, c: f64) -> PauliString {
        let mut p = PauliString::from_str(s).unwrap();
        p.coefficient = c;
        p
    }

    fn pauli_obs(s: &str) -> CMatrix {
        PauliString::from_str(s).unwrap().matrix()
    }

    #[test]
    fn half_rabi_period() {
        let h = HamiltonianSpec::new(1, vec![ps("X", std::f64::consts::FRAC_PI_2)]).unwrap();
        let out = evolve_ideal(&DensityState::computational(1, 0), &h, &EvolutionConfig::until(1.0)).unwrap();
        assert_abs_diff_eq!(out.expectation(&pauli_obs("Z")), -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(out.purity(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn zero_hamiltonian_keeps_state() {
        let s = DensityState::plus_state(2);
        let out = evolve_ideal(&s, &HamiltonianSpec::zero(2), &EvolutionConfig::until(3.0)).unwrap();
        assert!(max_abs_diff(&out.matrix, &s.matrix) < 1e-15);
    }

    #[test]
    fn heisenberg_pair_matches_expm() {
        let j = 0.8;
        let h = HamiltonianSpec::new(2, vec![ps("XX", j), ps("YY", j), ps("ZZ", j)]).unwrap();
        let s = DensityState::computational(2, 1);
        let t = 1.3;
        let out = evolve_ideal(&s, &h, &EvolutionConfig::until(t)).unwrap();
        let u = expm(&h.matrix().mapv(|z| z * c64(0.0, -t)));
        let oracle = matmul(&matmul(&u, &s.matrix), &dagger(&u));
        assert!(max_abs_diff(&out.matrix, &oracle) < 1e-9);
        // |01⟩ under the exchange coupling: ⟨Z⊗I⟩ = cos(4Jt).
        assert_abs_diff_eq!(out.expectation(&pauli_obs("ZI")), (4.0 * j * t).cos(), epsilon = 1e-9);
    }

    #[test]
    fn dephasing_plus_state() {
        let noise = NoiseModel::new(1, vec![LindbladTerm::dephasing(0, 0.25)]).unwrap();
        let out = evolve_noisy(
            &DensityState::plus_state(1),
            &HamiltonianSpec::zero(1),
            &noise,
            &EvolutionConfig::until(1.0),
        )
        .unwrap();
        assert_abs_diff_eq!(out.expectation(&pauli_obs("X")), (-0.5f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn amplitude_damping_population() {
        let lam = 0.7;
        let noise = NoiseModel::new(1, vec![LindbladTerm::amplitude_damping(0, lam)]).unwrap();
        for t in [0.3, 1.0, 4.0] {
            let out = evolve_noisy(
                &DensityState::computational(1, 1),
                &HamiltonianSpec::zero(1),
                &noise,
                &EvolutionConfig::until(t),
            )
            .unwrap();
            assert_abs_diff_eq!(
                out.expectation(&pauli_obs("Z")),
                1.0 - 2.0 * (-lam * t).exp(),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn zero_rates_reduce_to_ideal() {
        let h = HamiltonianSpec::new(2, vec![ps("XZ", 1.1), ps("YI", -0.4)]).unwrap();
        let noise = NoiseModel::new(
            2,
            vec![LindbladTerm::dephasing(0, 0.0), LindbladTerm::amplitude_damping(1, 0.0)],
        )
        .unwrap();
        let cfg = EvolutionConfig::until(2.0);
        let s = DensityState::plus_state(2);
        let a = evolve_noisy(&s, &h, &noise, &cfg).unwrap();
        let b = evolve_ideal(&s, &h, &cfg).unwrap();
        assert!(max_abs_diff(&a.matrix, &b.matrix) < 1e-10);
    }

    #[test]
    fn negative_rate_rejected_for_noisy() {
        let noise = NoiseModel::new(1, vec![LindbladTerm::dephasing(0, -0.1)]).unwrap();
        assert!(evolve_noisy(
            &DensityState::plus_state(1),
            &HamiltonianSpec::zero(1),
            &noise,
            &EvolutionConfig::until(1.0)
        )
        .is_err());
    }

    #[test]
    fn effective_difference_is_linear_in_rate() {
        let lam = 0.3;
        let exp = NoiseModel::new(1, vec![LindbladTerm::dephasing(0, 1.1 * lam)]).unwrap();
        let est = NoiseModel::new(1, vec![LindbladTerm::dephasing(0, lam)]).unwrap();
        let delta = exp.difference(&est).unwrap();
        let h = HamiltonianSpec::new(1, vec![ps("Y", 0.9)]).unwrap();
        let cfg = EvolutionConfig::until(2.0);
        let s = DensityState::plus_state(1);
        let a = evolve_effective(&s, &h, &delta, &cfg).unwrap();
        let small = NoiseModel::new(1, vec![LindbladTerm::dephasing(0, 0.1 * lam)]).unwrap();
        let b = evolve_noisy(&s, &h, &small, &cfg).unwrap();
        assert!(max_abs_diff(&a.matrix, &b.matrix) < 1e-9);
        let zero = exp.difference(&exp).unwrap();
        let c = evolve_effective(&s, &h, &zero, &cfg).unwrap();
        let d = evolve_ideal(&s, &h, &cfg).unwrap();
        assert!(max_abs_diff(&c.matrix, &d.matrix) < 1e-9);
    }

    #[test]
    fn rescaled_dephasing_matches_boosted_rate() {
        let lam = 0.2;
        let noise = NoiseModel::new(1, vec![LindbladTerm::dephasing(0, lam)]).unwrap();
        let h = HamiltonianSpec::new(1, vec![ps("X", 1.7), ps("Z", 0.4)]).unwrap();
        let cfg = EvolutionConfig::until(1.5);
        let s = DensityState::plus_state(1);
        let a = evolve_rescaled(&s, &h, &noise, 2.0, &cfg).unwrap();
        let b = evolve_noisy(&s, &h, &noise.scaled(2.0), &cfg).unwrap();
        assert!(trace_distance(&a.matrix, &b.matrix) < 1e-8);
        let one = evolve_rescaled(&s, &h, &noise, 1.0, &cfg).unwrap();
        let plain = evolve_noisy(&s, &h, &noise, &cfg).unwrap();
        assert!(max_abs_diff(&one.matrix, &plain.matrix) < 1e-14);
    }

    #[test]
    fn rescaled_linear_profile_boosts_by_square() {
        let rate = 0.1;
        let noise = NoiseModel::new(
            1,
            vec![LindbladTerm::dephasing(0, rate).with_profile(TimeProfile::Linear)],
        )
        .unwrap();
        let h = HamiltonianSpec::new(1, vec![ps("Z", 2.0)]).unwrap();
        let cfg = EvolutionConfig::until(1.2);
        let s = DensityState::plus_state(1);
        let a = evolve_rescaled(&s, &h, &noise, 2.0, &cfg).unwrap();
        let b = evolve_noisy(&s, &h, &noise.scaled(4.0), &cfg).unwrap();
        assert!(trace_distance(&a.matrix, &b.matrix) < 1e-8);
    }

    #[test]
    fn conventions_relate_by_factor_two() {
        let noise = NoiseModel::new(1, vec![LindbladTerm::amplitude_damping(0, 0.3)]).unwrap();
        let h = HamiltonianSpec::new(1, vec![ps("X", 0.5)]).unwrap();
        let s = DensityState::computational(1, 1);
        let cfg = EvolutionConfig::until(1.0);
        let a = evolve_noisy(&s, &h, &noise, &cfg.with_convention(Convention::Doubled)).unwrap();
        let b = evolve_noisy(&s, &h, &noise.scaled(2.0), &cfg).unwrap();
        assert_eq!(a.matrix, b.matrix);
    }

    #[test]
    fn generator_apply_examples() {
        let s = DensityState::plus_state(1);
        let zero = generator_apply(&s, &HamiltonianSpec::zero(1), &NoiseModel::noiseless(1)).unwrap();
        assert!(zero.iter().all(|z| *z == ZERO));

        let h = HamiltonianSpec::new(1, vec![ps("Y", 0.6), ps("Z", -0.2)]).unwrap();
        let comm = generator_apply(&s, &h, &NoiseModel::noiseless(1)).unwrap();
        assert!(crate::linalg::trace(&comm).norm() < 1e-15);

        let lam = 0.4;
        let noise = NoiseModel::new(1, vec![LindbladTerm::dephasing(0, lam)]).unwrap();
        let out = generator_apply(&s, &HamiltonianSpec::zero(1), &noise).unwrap();
        let mut off = s.matrix.clone();
        off[[0, 0]] = ZERO;
        off[[1, 1]] = ZERO;
        assert!(max_abs_diff(&out, &off.mapv(|z| z * (-2.0 * lam))) < 1e-15);
    }

    #[test]
    fn trace_preserved_under_noise() {
        let h = HamiltonianSpec::new(2, vec![ps("XX", 2.0), ps("ZI", 1.0), ps("IY", 0.5)]).unwrap();
        let noise = NoiseModel::new(
            2,
            vec![
                LindbladTerm::amplitude_damping(0, 0.2),
                LindbladTerm::dephasing(1, 0.3),
                LindbladTerm::amplitude_damping(1, 0.1),
            ],
        )
        .unwrap();
        let out = evolve_noisy(&DensityState::plus_state(2), &h, &noise, &EvolutionConfig::until(3.0)).unwrap();
        assert_abs_diff_eq!(out.trace(), 1.0, epsilon = 1e-8);
        assert!(crate::linalg::hermitian_eigenvalues(&out.matrix)[0] > -1e-9);
    }

    #[test]
    fn nonlocal_terms_rejected() {
        let op = crate::linalg::identity::<C64>(8);
        let t = LindbladTerm::new(op, vec![0, 1, 2], 0.1).unwrap();
        assert_eq!(NoiseModel::new(3, vec![t]), Err(QemError::NonLocalTerm { arity: 3 }));
    }

    #[test]
    fn expm_and_propagator_agree_with_integrator() {
        let h = HamiltonianSpec::new(2, vec![ps("XY", 1.3), ps("ZI", -0.7)]).unwrap();
        let noise = NoiseModel::new(
            2,
            vec![LindbladTerm::amplitude_damping(1, 0.2), LindbladTerm::dephasing(0, 0.1)],
        )
        .unwrap();
        let g = Generator::new(&h, &noise, Convention::Gksl).unwrap();
        let s = DensityState::plus_state(2);
        let t = 1.37;
        let a = evolve_expm(&g, &s, t).unwrap();
        let b = evolve_noisy(&s, &h, &noise, &EvolutionConfig::until(t)).unwrap();
        assert!(max_abs_diff(&a.matrix, &b.matrix) < 1e-9);

        let prop = PauliPropagator::new(g.transfer_matrix(0.0), 2.0).unwrap();
        let mut v = Array1::zeros(16);
        pauli_traces_real(&s.matrix, 2, &mut v);
        prop.apply(&mut v, t);
        let mut m = CMatrix::zeros((4, 4));
        from_pauli_traces_real(&v, 2, &mut m);
        assert!(max_abs_diff(&m, &a.matrix) < 1e-12);
    }

    #[test]
    fn superoperator_term_matches_lindblad_term() {
        use crate::pauli::{embed_local, ptm_from_kraus, KrausMap, LocalMap};
        // D[Z](ρ) = ZρZ − ρ, written as the map (𝓩 − 𝓘) with weight λ.
        let lam = 0.35;
        let z = ptm_from_kraus(&KrausMap::single(vec![Pauli::Z.matrix()]).unwrap()).unwrap();
        let mut m = z.matrix.clone();
        m -= &crate::linalg::identity::<f64>(4);
        let map = embed_local(
            &LocalMap::Transfer {
                ptm: crate::pauli::TransferMatrix::new(m).unwrap(),
                support: vec![1],
            },
            2,
        )
        .unwrap();
        let h = HamiltonianSpec::new(2, vec![ps("XX", 0.9)]).unwrap();
        let g = Generator::new(&h, &NoiseModel::noiseless(2), Convention::Gksl)
            .unwrap()
            .with_superoperator(map, lam, TimeProfile::Constant)
            .unwrap();
        let noise = NoiseModel::new(2, vec![LindbladTerm::dephasing(1, lam)]).unwrap();
        let g2 = Generator::new(&h, &noise, Convention::Gksl).unwrap();
        assert!(max_abs_diff(&g.transfer_matrix(0.0), &g2.transfer_matrix(0.0)) < 1e-13);
    }
}
